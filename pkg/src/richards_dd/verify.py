"""Measurable checks: bounds, L-scheme contraction, tau/eps self-convergence, MMS order.

All space-time distances use the lumped-mass L2 norm in space and the exact
integral in time of piecewise-constant trajectories over the merged partition.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .lsolver import IterationHistory, LschemeConfig, lscheme_solve, mass_norm
from .timestepper import MeshSpec, Scenario, Stepper, Trajectory


def worker_count() -> int:
    try:
        n = int(os.environ.get("RICHARDS_DD_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _map(fn, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class BoundsReport:
    step_min: np.ndarray
    step_max: np.ndarray
    lower: float
    upper: float
    tol: float

    @property
    def global_min(self) -> float:
        return float(self.step_min.min())

    @property
    def global_max(self) -> float:
        return float(self.step_max.max())

    @property
    def violation_below(self) -> float:
        return max(0.0, self.lower - self.global_min)

    @property
    def violation_above(self) -> float:
        return max(0.0, self.global_max - self.upper)

    @property
    def worst_violation(self) -> float:
        return max(self.violation_below, self.violation_above)

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.tol


def check_bounds(traj: Trajectory, lower: float, upper: float, tol: float = 1e-8) -> BoundsReport:
    arr = traj.as_array()
    return BoundsReport(arr.min(axis=1), arr.max(axis=1), lower, upper, tol)


@dataclass
class RateSummary:
    errors: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    geometric_mean_ratio: float
    monotone_excess: float  # max over i of e^i - e^{i-1}


def lscheme_rate(history: IterationHistory, reference, mass, floor: float = 1e-11) -> RateSummary:
    """Errors of the stored iterates against a tightly converged reference.

    Ratios ``e^i / e^{i-1}`` are only formed while both errors exceed ``floor``
    (by default ten times the default linear-solver tolerance).
    """
    if history.iterates is None:
        raise ValueError("history has no stored iterates; solve with keep_iterates=True")
    errs = np.array([mass_norm(mass, u - reference) for u in history.iterates])
    keep = (errs[:-1] > floor) & (errs[1:] > floor)
    ratios = errs[1:][keep] / errs[:-1][keep]
    excess = float(np.max(np.diff(errs))) if errs.size > 1 else 0.0
    if ratios.size:
        gm = float(np.exp(np.mean(np.log(ratios))))
        mx = float(ratios.max())
    else:
        gm = mx = 0.0
    return RateSummary(errs, ratios, mx, gm, excess)


def solve_reference(stepper: Stepper, u_prev, t_prev, t_n, cfg: LschemeConfig, tol: float = 1e-13,
                    max_iters: int = 20_000):
    """Same L-scheme driven to ``tol`` (absolute, lumped L2) for use as a reference."""
    ref_cfg = replace(cfg, atol=tol, rtol=0.0, max_iters=max_iters)
    frozen = stepper.freeze(u_prev, t_prev, t_n, stepper.scenario.epsilon)
    u, hist = lscheme_solve(u_prev, frozen, ref_cfg, stepper.model.L_theta)
    return u, hist, frozen


def lscheme_sweep(stepper: Stepper, u_prev, t_prev, t_n, L_values, cfg: LschemeConfig,
                  reference=None):
    """Run one step at each ``L`` and return ``(L, history, RateSummary)`` rows."""
    if reference is None:
        reference, _, _ = solve_reference(stepper, u_prev, t_prev, t_n, cfg)
    frozen = stepper.freeze(u_prev, t_prev, t_n, stepper.scenario.epsilon)

    def one(L):
        _, hist = lscheme_solve(u_prev, frozen, replace(cfg, L=L), stepper.model.L_theta, keep_iterates=True)
        return L, hist, lscheme_rate(hist, reference, stepper.mass, floor=10.0 * cfg.lin_tol)

    return _map(one, L_values)


def spacetime_distance(a: Trajectory, b: Trajectory) -> float:
    """``||a - b||_{L2(Omega x I)}`` for piecewise-constant trajectories on the same mesh."""
    if a.mass.shape != b.mass.shape:
        raise ValueError("trajectories live on different meshes")
    ta, tb = np.asarray(a.times), np.asarray(b.times)
    if not math.isclose(ta[-1], tb[-1], rel_tol=1e-12):
        raise ValueError("trajectories cover different time intervals")
    cuts = np.union1d(ta, tb)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 1e-14 * ta[-1]:
            continue
        mid = 0.5 * (lo + hi)
        ia = int(np.searchsorted(ta, mid))
        ib = int(np.searchsorted(tb, mid))
        d = a.states[ia] - b.states[ib]
        total += (hi - lo) * float(a.mass @ (d * d))
    return math.sqrt(total)


@dataclass
class ConvergenceTable:
    parameter: str
    values: list
    distances: list
    orders: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def strictly_decreasing(self) -> bool:
        d = self.distances
        return all(d[i + 1] < d[i] for i in range(len(d) - 1))

    def rows(self):
        for i, (v, d) in enumerate(zip(self.values, self.distances)):
            order = self.orders[i - 1] if i >= 1 else float("nan")
            yield v, d, order


def _orders(distances):
    return [math.log2(distances[i - 1] / distances[i]) if distances[i] > 0 and distances[i - 1] > 0
            else float("nan") for i in range(1, len(distances))]


def _is_halving(values, rel=1e-9):
    return all(math.isclose(values[i] / values[i + 1], 2.0, rel_tol=rel) for i in range(len(values) - 1))


def tau_convergence_study(scenario: Scenario, tau_list, model=None) -> ConvergenceTable:
    """Self-convergence against a reference run at ``min(tau_list) / 4``."""
    taus = sorted((float(t) for t in tau_list), reverse=True)
    if not _is_halving(taus):
        raise ValueError("tau_list must be a halving sequence")
    model = scenario.build_model() if model is None else model
    steps = []
    for tau in taus + [taus[-1] / 4.0]:
        N = round(scenario.T / tau)
        if not math.isclose(N * tau, scenario.T, rel_tol=1e-9):
            raise ValueError(f"tau = {tau:g} does not divide T = {scenario.T:g}")
        steps.append(N)
    trajs = _map(lambda N: Stepper(replace(scenario, N=N), model).run(), steps)
    ref = trajs[-1]
    dist = [spacetime_distance(t, ref) for t in trajs[:-1]]
    return ConvergenceTable("tau", taus, dist, _orders(dist),
                            {"N": steps[:-1], "N_ref": steps[-1], "converged": [t.converged for t in trajs]})


def eps_convergence_study(scenario: Scenario, eps_list, tau=None, model=None) -> ConvergenceTable:
    """Distances between the eps-regularised and the degenerate run at fixed ``tau``."""
    eps = [float(e) for e in eps_list]
    if any(e <= 0.0 for e in eps) or any(eps[i + 1] >= eps[i] for i in range(len(eps) - 1)):
        raise ValueError("eps_list must be positive and strictly decreasing")
    if tau is not None:
        scenario = replace(scenario, N=round(scenario.T / tau))
    model = scenario.build_model() if model is None else model
    runs = _map(lambda e: Stepper(replace(scenario, epsilon=e), model).run(), [0.0] + eps)
    base = runs[0]
    dist = [spacetime_distance(r, base) for r in runs[1:]]
    return ConvergenceTable("epsilon", eps, dist, _orders(dist),
                            {"tau": scenario.tau, "converged": [r.converged for r in runs]})


MMS_EXACT = "sin(pi*x)*exp(-t)"
MMS_SOURCE = "(pi^2 - 1)*sin(pi*x)*exp(-t)"


def mms_scenario(n_cells: int = 400, T: float = 1.0, N: int = 10, solver: LschemeConfig | None = None) -> Scenario:
    """Linear heat problem ``u_t - u_xx = S`` on ``(0, 1)`` with exact ``sin(pi x) e^-t``."""
    return Scenario(
        soil=None, model="linear", linear_K=1.0, mesh=MeshSpec(dim=1, n_cells=n_cells),
        T=T, N=N, u0=MMS_EXACT, bc={"bottom": MMS_EXACT, "top": MMS_EXACT}, source=MMS_SOURCE,
        solver=solver or LschemeConfig(L=1.0), physical_bounds=False,
    )


def _exact_error(traj: Trajectory, exact) -> float:
    """``||u_tau - u||_{L2(Omega x I)}`` with the exact solution integrated in time by Gauss-Legendre."""
    z = traj.mesh.z
    gx, gw = np.polynomial.legendre.leggauss(6)
    total = 0.0
    for n in range(1, len(traj.times)):
        lo, hi = traj.times[n - 1], traj.times[n]
        for xi, wi in zip(gx, gw):
            t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi
            d = traj.states[n] - exact(x=z, z=z, t=t)
            total += 0.5 * (hi - lo) * wi * float(traj.mass @ (d * d))
    return math.sqrt(total)


def mms_linear_sanity(n_cells: int = 400, tau_list=None, T: float = 1.0) -> ConvergenceTable:
    from .expr import Expression

    taus = list(tau_list) if tau_list is not None else [T / 10 * 2.0**-k for k in range(5)]
    exact = Expression(MMS_EXACT)
    errs = []
    for tau in taus:
        sc = mms_scenario(n_cells, T, round(T / tau))
        errs.append(_exact_error(Stepper(sc).run(), exact))
    return ConvergenceTable("tau", taus, errs, _orders(errs))


def mass_balance(traj: Trajectory) -> np.ndarray:
    """Per-step ``|sum_int M dtheta - tau (S_int + boundary inflow)|``."""
    return np.array([d["balance_residual"] for d in traj.diagnostics])
