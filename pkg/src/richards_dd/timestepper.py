"""Semi-implicit Euler loop with coefficients frozen at the previous time level.

For ``n = 1..N`` the step solves, with ``u_{n-1}`` known,

    (theta(u_n) - theta(u_{n-1}), v) + tau ((K(u_{n-1}) + eps) grad u_n, grad v)
        + tau (Kbar(u_{n-1}), grad v) = tau (S(u_{n-1}), v)

by the L-scheme. ``eps = 0`` is the degenerate scheme.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import convection_load, lumped_mass, weighted_stiffness
from .constitutive import LinearModel, SoilParams, VanGenuchtenMualem
from .expr import Expression
from .lsolver import FrozenStep, IterationHistory, LschemeConfig, lscheme_solve
from .mesh import Mesh, element_mean, structured_triangle_mesh, uniform_interval_mesh


@dataclass(frozen=True)
class MeshSpec:
    """``dim = 1``: ``n_cells`` on ``[z0, z1]``. ``dim = 2``: ``nx * ny`` on ``[x0, x1] x [z0, z1]``."""

    dim: int = 1
    n_cells: int = 100
    nx: int = 1
    ny: int = 1
    x0: float = 0.0
    x1: float = 1.0
    z0: float = 0.0
    z1: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    def build(self) -> Mesh:
        if self.dim == 1:
            return uniform_interval_mesh(self.n_cells, self.z0, self.z1)
        return structured_triangle_mesh(self.nx, self.ny, (self.x0, self.x1, self.z0, self.z1))

    @property
    def tags(self) -> tuple:
        return ("bottom", "top") if self.dim == 1 else ("bottom", "top", "left", "right")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce a run.

    Data ``u0``, ``bc[tag]`` and ``source`` are expression strings over
    ``x, z, t, u`` (``ustar`` is bound to the model's saturation bound).
    ``model = "linear"`` replaces the soil by ``theta(u) = u``, ``K = linear_K``
    and no gravity.
    """

    soil: SoilParams | None = None
    mesh: MeshSpec = field(default_factory=MeshSpec)
    T: float = 1.0
    N: int = 10
    u0: str = "0"
    bc: tuple = (("bottom", "0"), ("top", "0"))
    source: str = "0"
    epsilon: float = 0.0
    solver: LschemeConfig = field(default_factory=LschemeConfig)
    model: str = "vgm"
    linear_K: float = 1.0
    physical_bounds: bool = True
    n_table: int = 2048

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.T > 0.0:
            raise ValueError("T must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")
        if self.model not in ("vgm", "linear"):
            raise ValueError("model must be 'vgm' or 'linear'")
        if self.model == "vgm" and self.soil is None:
            raise ValueError("model 'vgm' needs soil parameters")
        if isinstance(self.bc, dict):
            object.__setattr__(self, "bc", tuple(sorted(self.bc.items())))

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def bc_map(self) -> dict:
        return dict(self.bc)

    def build_model(self):
        if self.model == "linear":
            return LinearModel(K=self.linear_K)
        return VanGenuchtenMualem(self.soil, self.n_table)


@dataclass
class Trajectory:
    """Piecewise-constant-in-time solution ``u(t) = u_n`` on ``(t_{n-1}, t_n]``."""

    mesh: Mesh
    mass: np.ndarray
    times: np.ndarray
    states: list
    histories: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return all(h.converged for h in self.histories)

    def as_array(self) -> np.ndarray:
        return np.vstack(self.states)


class Stepper:
    """Prepared mesh, model and data expressions for one scenario."""

    def __init__(self, scenario: Scenario, model=None, keep_iterates: bool = False):
        self.scenario = scenario
        self.model = scenario.build_model() if model is None else model
        self.mesh = scenario.mesh.build()
        self.mass = lumped_mass(self.mesh)
        self.keep_iterates = keep_iterates
        consts = {"ustar": self.model.u_star if self.model.u_star is not None else 1.0}
        self.u0 = Expression(scenario.u0, consts)
        self.source = Expression(scenario.source, consts)
        bcmap = scenario.bc_map
        tags = np.asarray(self.mesh.boundary_tags)
        missing = sorted(set(tags) - set(bcmap))
        if missing:
            raise ValueError(f"missing boundary value for tag(s): {', '.join(missing)}")
        self.bc_exprs = {tag: Expression(bcmap[tag], consts) for tag in sorted(set(tags))}
        self._tag_of_bnode = tags

    def _coords(self, nodes=None):
        x, z = self.mesh.x, self.mesh.z
        if self.mesh.dim == 1:
            x = z  # in 1D, x and z name the same coordinate
        if nodes is None:
            return x, z
        return x[nodes], z[nodes]

    def dirichlet_values(self, t: float) -> np.ndarray:
        bn = self.mesh.boundary_nodes
        x, z = self._coords(bn)
        vals = np.empty(bn.size)
        for tag, ex in self.bc_exprs.items():
            sel = self._tag_of_bnode == tag
            vals[sel] = ex(x=x[sel], z=z[sel], t=t)
        return vals

    def initial_state(self) -> np.ndarray:
        x, z = self._coords()
        u = self.u0(x=x, z=z, t=0.0)
        u[self.mesh.boundary_nodes] = self.dirichlet_values(0.0)
        us = self.model.u_star
        if self.scenario.physical_bounds and us is not None:
            if np.any(u < 0.0) or np.any(u > us * (1 + 1e-12)):
                raise ValueError("initial/boundary data leave [0, u*] with physical_bounds enabled")
        return u

    def freeze(self, u_prev: np.ndarray, t_prev: float, t_n: float, epsilon: float) -> FrozenStep:
        """Assemble the frozen operators of the step ``t_prev -> t_n``."""
        mesh, model = self.mesh, self.model
        tau = t_n - t_prev
        u_el = element_mean(mesh, u_prev)
        A = weighted_stiffness(mesh, model.conductivity(u_el) + epsilon)
        Fc = convection_load(mesh, model.kbar_z(u_el))
        x, z = self._coords()
        s = self.source(x=x, z=z, t=t_prev, u=u_prev)
        rhs = self.mass * model.theta(u_prev) + tau * (self.mass * s - Fc)
        return FrozenStep(self.mass, A, tau, rhs, mesh.boundary_nodes, self.dirichlet_values(t_n),
                          model.theta, convection=Fc, source_nodal=s)

    def step(self, u_prev, t_prev, t_n, epsilon=None, cfg=None):
        """Advance one step; returns ``(u_n, history, diagnostics)``."""
        sc = self.scenario
        eps = sc.epsilon if epsilon is None else epsilon
        cfg = sc.solver if cfg is None else cfg
        frozen = self.freeze(u_prev, t_prev, t_n, eps)
        u, hist = lscheme_solve(u_prev, frozen, cfg, self.model.L_theta, keep_iterates=self.keep_iterates)
        return u, hist, self._diagnostics(u_prev, u, frozen, hist)

    def _diagnostics(self, u_prev, u, frozen, hist):
        M = self.mass
        dtheta = M * (self.model.theta(u) - self.model.theta(u_prev))
        flux_rows = frozen.stiffness @ u + frozen.convection
        interior = self.mesh.interior_nodes
        bnodes = self.mesh.boundary_nodes
        storage = float(dtheta[interior].sum())
        src = float((M * frozen.source_nodal)[interior].sum())
        bflux = float(flux_rows[bnodes].sum())
        return {
            "min_u": float(u.min()),
            "max_u": float(u.max()),
            "theta_mass": float(M @ self.model.theta(u)),
            "storage_change": storage,
            "source_total": src,
            "boundary_flux": bflux,
            "tau": frozen.tau,
            "balance_residual": abs(storage - frozen.tau * (src + bflux)),
            "balance_scale": max(abs(storage), frozen.tau * (abs(src) + abs(bflux)),
                                 float(np.abs(dtheta).sum())),
            # summed interior residual <= lin_tol * system_scale + increment_bound
            "system_scale": float(np.sqrt(interior.size) * hist.rhs_norms[-1]) if hist.n_iters else 0.0,
            "increment_bound": float((hist.L + self.model.L_theta) * np.sqrt(M[interior].sum())
                                     * hist.increment_norms[-1]) if hist.n_iters else 0.0,
            "lscheme_iters": hist.n_iters,
            "converged": hist.converged,
        }

    def run(self, epsilon=None, abort_on_nonconvergence=False) -> Trajectory:
        sc = self.scenario
        start = time.perf_counter()
        times = np.linspace(0.0, sc.T, sc.N + 1)
        u = self.initial_state()
        traj = Trajectory(self.mesh, self.mass, times, [u])
        for n in range(1, sc.N + 1):
            u, hist, diag = self.step(u, times[n - 1], times[n], epsilon)
            traj.states.append(u)
            traj.histories.append(hist)
            traj.diagnostics.append(diag)
            if abort_on_nonconvergence and not hist.converged:
                traj.times = times[: n + 1]
                break
        traj.wall_time = time.perf_counter() - start
        return traj


def step(u_prev, t_n, scenario: Scenario, model=None):
    """Single step ending at ``t_n`` (``tau`` from the scenario)."""
    st = Stepper(scenario, model)
    u, hist, _ = st.step(np.asarray(u_prev, dtype=float), t_n - scenario.tau, t_n)
    return u, hist


def run(scenario: Scenario, model=None, **kwargs) -> Trajectory:
    return Stepper(scenario, model).run(**kwargs)


def run_regularized(scenario: Scenario, eps: float, model=None, **kwargs) -> Trajectory:
    """Same loop with stiffness weight ``K + eps``."""
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    return Stepper(replace(scenario, epsilon=eps), model).run(**kwargs)


def with_steps(scenario: Scenario, N: int) -> Scenario:
    return replace(scenario, N=N)


__all__ = ["MeshSpec", "Scenario", "Trajectory", "Stepper", "step", "run", "run_regularized",
           "with_steps", "IterationHistory"]
