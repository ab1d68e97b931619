"""L-scheme fixed-point iteration for one semi-discrete time step.

Each iteration solves the SPD system

    (L M + tau A) U^i = L M U^{i-1} - M theta(U^{i-1}) + rhs_fixed

with ``M`` the lumped mass, ``A`` the frozen weighted stiffness and
``rhs_fixed = M theta(U_{n-1}) + tau (F_source - F_convection)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import apply_dirichlet

log = logging.getLogger(__name__)


class LinearSolverError(RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class LschemeConfig:
    """Stabilisation ``L`` (``None`` means ``L_theta`` of the model) and tolerances."""

    L: float | None = None
    atol: float = 1e-10
    rtol: float = 1e-8
    max_iters: int = 200
    lin_tol: float = 1e-12
    lin_max_iters: int = 10_000

    def __post_init__(self):
        if self.L is not None and not self.L > 0.0:
            raise ValueError("L must be positive")
        if self.atol < 0.0 or self.rtol < 0.0 or (self.atol == 0.0 and self.rtol == 0.0):
            raise ValueError("atol and rtol must be non-negative and not both zero")
        if not self.lin_tol > 0.0:
            raise ValueError("lin_tol must be positive")
        if self.max_iters < 1 or self.lin_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")

    def resolve_L(self, L_theta: float) -> float:
        L = L_theta if self.L is None else self.L
        if L <= 0.5 * L_theta:
            warnings.warn(f"L = {L:g} is not above L_theta/2 = {0.5 * L_theta:g}; convergence is not guaranteed",
                          stacklevel=3)
        elif L < L_theta:
            warnings.warn(f"L = {L:g} is below L_theta = {L_theta:g}", stacklevel=3)
        return L


@dataclass
class IterationHistory:
    increment_norms: list = field(default_factory=list)
    weighted_seminorms: list = field(default_factory=list)
    cg_iters: list = field(default_factory=list)
    rhs_norms: list = field(default_factory=list)
    iterates: list | None = None
    converged: bool = False
    L: float = float("nan")

    @property
    def n_iters(self) -> int:
        return len(self.increment_norms)


@dataclass
class FrozenStep:
    """Operators of one time step, assembled from ``u_{n-1}``."""

    mass: np.ndarray
    stiffness: sp.csr_matrix
    tau: float
    rhs_fixed: np.ndarray
    bc_nodes: np.ndarray
    bc_values: np.ndarray
    theta: Callable
    convection: np.ndarray | None = None
    source_nodal: np.ndarray | None = None


def mass_norm(mass, v) -> float:
    return float(np.sqrt(np.dot(mass, v * v)))


def cg_solve(A, b, tol=1e-12, max_iters=10_000, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||b - A x|| <= tol * ||b||``. Returns ``(x, iterations)``.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise LinearSolverError("matrix has a non-positive diagonal", np.inf, 0)
    inv_diag = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, 0
    z = inv_diag * r
    p = z.copy()
    rz = np.dot(r, z)
    for k in range(1, max_iters + 1):
        Ap = A @ p
        step = rz / np.dot(p, Ap)
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, k
        z = inv_diag * r
        rz_new = np.dot(r, z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise LinearSolverError("conjugate gradients did not converge", rnorm / bnorm, max_iters)


class _ShiftedSystem:
    """Constrained ``L M + tau A`` with the Dirichlet lift precomputed."""

    def __init__(self, frozen: FrozenStep, L: float):
        self.frozen = frozen
        self.L = L
        n = frozen.mass.size
        S = sp.diags(L * frozen.mass) + frozen.tau * frozen.stiffness
        self.matrix, self._lift = apply_dirichlet(S, np.zeros(n), frozen.bc_nodes, frozen.bc_values)
        self.free = np.ones(n)
        self.free[frozen.bc_nodes] = 0.0

    def rhs(self, u_prev_iter):
        f = self.frozen
        r = self.L * f.mass * u_prev_iter - f.mass * f.theta(u_prev_iter) + f.rhs_fixed
        return self.free * r + self._lift


def lscheme_step(u_prev_iter, frozen: FrozenStep, cfg: LschemeConfig, L: float | None = None,
                 _system: _ShiftedSystem | None = None):
    """One L-scheme iteration; returns ``(U^i, cg_iterations)``."""
    u, its, _ = _iterate(u_prev_iter, frozen, cfg, L, _system)
    return u, its


def _iterate(u_prev_iter, frozen, cfg, L=None, system=None):
    if system is None:
        if L is None:
            L = 1.0 if cfg.L is None else cfg.L
        system = _ShiftedSystem(frozen, L)
    b = system.rhs(u_prev_iter)
    x0 = u_prev_iter.copy()
    x0[frozen.bc_nodes] = frozen.bc_values
    u, its = cg_solve(system.matrix, b, cfg.lin_tol, cfg.lin_max_iters, x0=x0)
    return u, its, float(np.linalg.norm(b))


def lscheme_solve(u_init, frozen: FrozenStep, cfg: LschemeConfig, L_theta: float = 1.0,
                  keep_iterates: bool = False):
    """Iterate until ``||U^i - U^{i-1}|| <= atol + rtol ||U^i||`` (lumped L2 norms).

    On exhausting ``max_iters`` the last iterate is returned with
    ``history.converged = False``.
    """
    L = cfg.resolve_L(L_theta)
    system = _ShiftedSystem(frozen, L)
    hist = IterationHistory(iterates=[] if keep_iterates else None, L=L)
    u = np.array(u_init, dtype=float)
    u[frozen.bc_nodes] = frozen.bc_values
    if keep_iterates:
        hist.iterates.append(u.copy())
    for _ in range(cfg.max_iters):
        u_new, its, bnorm = _iterate(u, frozen, cfg, system=system)
        inc = mass_norm(frozen.mass, u_new - u)
        hist.increment_norms.append(inc)
        hist.weighted_seminorms.append(float(np.sqrt(max(u_new @ (frozen.stiffness @ u_new), 0.0))))
        hist.cg_iters.append(its)
        hist.rhs_norms.append(bnorm)
        u = u_new
        if keep_iterates:
            hist.iterates.append(u.copy())
        if inc <= cfg.atol + cfg.rtol * mass_norm(frozen.mass, u):
            hist.converged = True
            break
    else:
        log.warning("L-scheme did not converge in %d iterations (last increment %.3e)",
                    cfg.max_iters, hist.increment_norms[-1])
    return u, hist
