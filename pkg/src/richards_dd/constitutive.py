"""Transformed van Genuchten-Mualem constitutive family in the bounded variable u.

The saturation is ``theta = U^{-1}`` with ``U(theta) = int_0^theta (1 - s^c)^{-b} ds``,
extended to the whole real line so that it is C^1, strictly increasing and
Lipschitz with constant 1. Conductivity and the gravity coefficient are
extended evenly below zero and constantly above ``u_star``.

Everything here is vectorised over numpy arrays; scalars work too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicHermiteSpline

__all__ = [
    "SoilParams",
    "ConstitutiveTable",
    "CertificationReport",
    "TableBuildError",
    "build_table",
    "theta_extended",
    "theta_prime",
    "inverse_theta",
    "conductivity_K",
    "kbar1_z",
    "kbar_z",
    "vg_relative_permeability",
    "vg_pressure_head",
    "phi_kirchhoff",
    "certify_hypotheses",
    "VanGenuchtenMualem",
    "LinearModel",
]

THETA_FLOOR = 1e-12  # K returns exactly 0 below this saturation
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class TableBuildError(RuntimeError):
    """Raised when the saturation ODE does not reach full saturation."""


@dataclass(frozen=True)
class SoilParams:
    """Constitutive constants of the transformed van Genuchten-Mualem model.

    ``b`` and ``c`` define the transform, ``a`` the change-of-variable exponent
    in the conductivity, ``m`` the van Genuchten shape (``n = 1/(1-m)``).
    ``phi_porosity`` is ``theta_s - theta_r``.
    """

    b: float
    c: float
    a: float
    m: float
    h_cap: float = 1.0
    K_s: float = 1.0
    C_scale: float = 1.0
    phi_porosity: float = 1.0

    def __post_init__(self):
        for name in ("b", "c", "a", "m", "h_cap", "K_s", "C_scale", "phi_porosity"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.b < 1.0:
            raise ValueError("b must lie in [0,1)")
        if self.c < 1.0:
            raise ValueError("c must be >= 1")
        if self.a < 1.0:
            raise ValueError("a must be >= 1")
        if not 0.0 < self.m < 1.0:
            raise ValueError("m must lie in (0,1)")
        for name in ("h_cap", "K_s", "C_scale", "phi_porosity"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.removability_exponent <= 0.0:
            raise ValueError(
                "removability exponent 1/2 + 2/m - a must be positive "
                f"(got {self.removability_exponent:.6g}); K_r(theta) theta^-a would not vanish at theta=0"
            )

    @property
    def n(self) -> float:
        return 1.0 / (1.0 - self.m)

    @property
    def removability_exponent(self) -> float:
        # K_r(theta) ~ m^2 theta^(1/2 + 2/m) as theta -> 0
        return 0.5 + 2.0 / self.m - self.a

    @property
    def K_saturated(self) -> float:
        """Saturated conductivity value ``C* = (C/phi) K_s`` (``K_r(1) = 1``)."""
        return self.C_scale / self.phi_porosity * self.K_s


def _one_minus_pow(d, c):
    """``1 - (1 - d)^c`` without cancellation for small ``d``."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(c * np.log1p(-np.minimum(d, 1.0)))
    return np.where(d >= 1.0, 1.0, out)


def _desingularised_rhs(r, b, c):
    """Right-hand side of the ODE for ``r = (1 - theta)^(1-b)``.

    ``r' = -(1-b) q^b`` with ``q = (1 - theta^c)/(1 - theta)``, which stays
    bounded (``q -> c``) at saturation. Extended smoothly to ``r < 0`` so the
    integrator may step past the saturation point.
    """
    p = 1.0 / (1.0 - b)
    d = math.copysign(abs(r) ** p, r)  # 1 - theta
    if abs(d) < 1e-7:
        q = c - 0.5 * c * (c - 1.0) * d
    elif d < 1.0:
        q = -math.expm1(c * math.log1p(-d)) / d
    else:
        q = 1.0 / d  # theta <= 0, only reached by the first stage from r = 1
    return -(1.0 - b) * q**b


def _rk4_step(r, h, b, c):
    k1 = _desingularised_rhs(r, b, c)
    k2 = _desingularised_rhs(r + 0.5 * h * k1, b, c)
    k3 = _desingularised_rhs(r + 0.5 * h * k2, b, c)
    k4 = _desingularised_rhs(r + h * k3, b, c)
    return r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(b, c, eta):
    r = np.empty_like(eta)
    r[0] = 1.0
    for i in range(len(eta) - 1):
        r[i + 1] = _rk4_step(r[i], eta[i + 1] - eta[i], b, c)
    return r


def _snap_to_saturation(r0, b, c, tol=1e-15):
    """Step size ``h`` with ``RK4(r0, h) = 0``, by Newton on the single step."""
    h = r0 / ((1.0 - b) * c**b)
    for _ in range(30):
        f = _rk4_step(r0, h, b, c)
        df = (_rk4_step(r0, h * (1 + 1e-7) + 1e-14, b, c) - f) / (h * 1e-7 + 1e-14)
        dh = f / df
        h -= dh
        if abs(dh) <= tol * max(h, 1e-300):
            break
    return h


def _fritsch_carlson(eta, theta, slopes):
    """Shrink Hermite slopes where needed so each increasing cell stays monotone."""
    slopes = slopes.copy()
    secant = np.diff(theta) / np.diff(eta)
    for k, s in enumerate(secant):
        if s <= 0.0:
            continue
        alpha, beta = slopes[k] / s, slopes[k + 1] / s
        rad = alpha * alpha + beta * beta
        if rad > 9.0:
            tau = 3.0 / math.sqrt(rad)
            slopes[k] = tau * alpha * s
            slopes[k + 1] = tau * beta * s
    return slopes


@dataclass(frozen=True)
class ConstitutiveTable:
    """Tabulated saturation ``theta(eta)`` on ``[0, u_star]``.

    Between samples, ``theta`` is a monotone cubic Hermite interpolant that
    uses the exact ODE slopes at the nodes.
    """

    b: float
    c: float
    u_star: float
    eta_grid: np.ndarray
    theta_grid: np.ndarray
    slope_grid: np.ndarray
    L_theta: float = 1.0
    _spline: CubicHermiteSpline = field(init=False, repr=False, compare=False)
    _phi_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        slopes = _fritsch_carlson(self.eta_grid, self.theta_grid, self.slope_grid)
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.eta_grid, self.theta_grid, slopes))
        object.__setattr__(self, "_phi_nodes", None)

    @property
    def alpha(self) -> float:
        return 1.0 / (2.0 * self.u_star)

    @property
    def delta_holder(self) -> float:
        return 1.0 - self.b

    @property
    def C_holder(self) -> float:
        return 2.0 / (1.0 - self.b)

    @property
    def H_theta(self) -> float:
        return max(1.0, self.C_holder)

    def theta_on_range(self, eta):
        """Interpolated ``theta`` for ``eta`` already clipped to ``[0, u_star]``."""
        return self._spline(eta)


def build_table(params: SoilParams, n_samples: int = 2048) -> ConstitutiveTable:
    """Tabulate ``theta`` by integrating ``theta' = (1 - theta^c)^b`` from 0.

    The ODE is integrated with classical RK4 in the variable
    ``r = (1 - theta)^(1-b)``, which removes the non-Lipschitz behaviour at
    saturation. A coarse uniform pass locates ``u_star``; the production pass
    uses a cosine-graded grid, refined at both ends, and the final node is
    snapped onto ``theta = 1`` by Newton's method on the last step.
    """
    if n_samples < 64:
        raise ValueError("n_samples must be >= 64")
    b, c = params.b, params.c

    # coarse pass: walk until r changes sign
    h = 1.0 / 256
    r, eta = 1.0, 0.0
    max_eta = 1e4
    while True:
        r_next = _rk4_step(r, h, b, c)
        if r_next <= 0.0:
            break
        r, eta = r_next, eta + h
        if eta > max_eta:
            raise TableBuildError(f"theta did not reach 1 - 1e-12 before eta = {max_eta:g}")
    u_est = eta + _snap_to_saturation(r, b, c)

    k = np.arange(n_samples)
    eta_grid = u_est * 0.5 * (1.0 - np.cos(np.pi * k / (n_samples - 1)))
    # stop one node short of the estimate, then snap onto saturation
    eta_grid = eta_grid[:-1]
    r_grid = _integrate(b, c, eta_grid)
    if not np.all(r_grid > 0.0):
        first = int(np.argmax(r_grid <= 0.0))
        eta_grid, r_grid = eta_grid[:first], r_grid[:first]
    u_star = eta_grid[-1] + _snap_to_saturation(r_grid[-1], b, c)
    eta_grid = np.append(eta_grid, u_star)
    r_grid = np.append(r_grid, 0.0)
    d = np.clip(r_grid, 0.0, None) ** (1.0 / (1.0 - b))  # 1 - theta
    theta_grid = 1.0 - d
    if not np.isfinite(u_star) or abs(_rk4_step(r_grid[-2], u_star - eta_grid[-2], b, c)) > 1e-12:
        raise TableBuildError("theta did not reach 1 - 1e-12 within the integration budget")
    slope_grid = _one_minus_pow(d, c) ** b
    slope_grid[-1] = 0.0 if b > 0 else 1.0
    return ConstitutiveTable(b=b, c=c, u_star=float(u_star), eta_grid=eta_grid,
                             theta_grid=theta_grid, slope_grid=slope_grid)


def _fold_symmetric(eta, table):
    """Map ``eta`` to the unreflected branch; returns (folded, reflected mask)."""
    eta = np.asarray(eta, dtype=float)
    reflected = eta > table.u_star
    return np.where(reflected, 2.0 * table.u_star - eta, eta), reflected


def theta_extended(eta, table: ConstitutiveTable):
    """Globally extended saturation: identity below 0, point-symmetric about (u*, 1)."""
    e, reflected = _fold_symmetric(eta, table)
    inner = table.theta_on_range(np.clip(e, 0.0, table.u_star))
    val = np.where(e < 0.0, e, inner)
    out = np.where(reflected, 2.0 - val, val)
    return out if out.ndim else float(out)


def theta_prime(eta, table: ConstitutiveTable):
    """``theta'(eta)``: ``(1 - theta^c)^b`` on the physical range, 1 outside ``[0, 2u*]``."""
    e, _ = _fold_symmetric(eta, table)
    th = table.theta_on_range(np.clip(e, 0.0, table.u_star))
    d = np.clip(1.0 - th, 0.0, 1.0)
    inner = _one_minus_pow(d, table.c) ** table.b
    out = np.where(e < 0.0, 1.0, inner)
    return out if out.ndim else float(out)


def inverse_theta(theta, table: ConstitutiveTable, iters: int = 64):
    """Extended inverse ``U = theta^{-1}`` on all of R.

    Inside ``[0, 1]`` the tabulated interpolant is inverted by bisection inside
    the bracketing cell; ``[1, 2]`` follows from the point symmetry.
    """
    theta = np.asarray(theta, dtype=float)
    reflected = theta > 1.0
    s = np.where(reflected, 2.0 - theta, theta)
    tg, eg = table.theta_grid, table.eta_grid
    sc = np.clip(s, 0.0, 1.0)
    cell = np.clip(np.searchsorted(tg, sc, side="right") - 1, 0, len(eg) - 2)
    lo, hi = eg[cell].copy(), eg[cell + 1].copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = table.theta_on_range(mid) < sc
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    u = 0.5 * (lo + hi)
    u = np.where(s < 0.0, s, u)
    out = np.where(reflected, 2.0 * table.u_star - u, u)
    return out if out.ndim else float(out)


def vg_relative_permeability(theta, m: float):
    """Mualem relative permeability ``theta^(1/2) [1 - (1 - theta^(1/m))^m]^2``."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0.0) | (theta > 1.0)) or np.any(np.isnan(theta)):
        raise ValueError("theta must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        inner = -np.expm1(m * np.log1p(-np.minimum(theta ** (1.0 / m), 1.0)))
    out = np.sqrt(theta) * inner**2
    return out if out.ndim else float(out)


def vg_pressure_head(theta, params: SoilParams):
    """van Genuchten pressure head ``-h_cap (theta^(-1/m) - 1)^(1/n)``.

    Returns ``-inf`` at ``theta = 0``; callers must handle it.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0.0) | (theta > 1.0)):
        raise ValueError("theta must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        base = np.power(theta, -1.0 / params.m) - 1.0
    out = np.where(theta == 0.0, -np.inf, -params.h_cap * np.maximum(base, 0.0) ** (1.0 / params.n))
    return out if out.ndim else float(out)


def _kr_over_theta_a(theta, params: SoilParams):
    """``K_r(theta) theta^-a`` in log form; exactly 0 below ``THETA_FLOOR``."""
    th = np.clip(theta, THETA_FLOOR, 1.0)
    m = params.m
    with np.errstate(divide="ignore"):
        inner = -np.expm1(m * np.log1p(-np.minimum(th ** (1.0 / m), 1.0)))
        logv = (0.5 - params.a) * np.log(th) + 2.0 * np.log(inner)
    return np.where(theta < THETA_FLOOR, 0.0, np.exp(logv))


def conductivity_K(eta, params: SoilParams, table: ConstitutiveTable):
    """Extended conductivity: even in ``eta``, constant ``C*`` above ``u_star``."""
    e = np.abs(np.asarray(eta, dtype=float))
    th = table.theta_on_range(np.minimum(e, table.u_star))
    val = params.K_saturated * _kr_over_theta_a(th, params)
    out = np.where(e >= table.u_star, params.K_saturated, val)
    return out if out.ndim else float(out)


def kbar1_z(eta, params: SoilParams, table: ConstitutiveTable):
    """Vertical component of the auxiliary factor ``theta^a / C`` (even, constant above u*)."""
    e = np.abs(np.asarray(eta, dtype=float))
    th = table.theta_on_range(np.minimum(e, table.u_star))
    out = np.where(e >= table.u_star, 1.0, np.clip(th, 0.0, 1.0) ** params.a) / params.C_scale
    return out if out.ndim else float(out)


def kbar_z(eta, params: SoilParams, table: ConstitutiveTable):
    """Gravity coefficient ``K * Kbar1`` (vertical component)."""
    out = np.asarray(conductivity_K(eta, params, table)) * np.asarray(kbar1_z(eta, params, table))
    return out if out.ndim else float(out)


def _phi_at_nodes(params, table):
    if table._phi_nodes is not None:
        return table._phi_nodes
    eg = table.eta_grid
    lo, hi = eg[:-1], eg[1:]
    half = 0.5 * (hi - lo)
    pts = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]
    cell = (conductivity_K(pts, params, table) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
    nodes = np.concatenate([[0.0], np.cumsum(cell)])
    object.__setattr__(table, "_phi_nodes", nodes)
    return nodes


def phi_kirchhoff(u, params: SoilParams, table: ConstitutiveTable):
    """Kirchhoff transform ``Phi(u) = int_0^u K``; odd because K is even."""
    u = np.asarray(u, dtype=float)
    nodes = _phi_at_nodes(params, table)
    eg = table.eta_grid
    e = np.minimum(np.abs(u), table.u_star)
    cell = np.clip(np.searchsorted(eg, e, side="right") - 1, 0, len(eg) - 2)
    lo = eg[cell]
    half = 0.5 * (e - lo)
    pts = (0.5 * (e + lo))[..., None] + half[..., None] * _GL_NODES
    partial = (conductivity_K(pts, params, table) * _GL_WEIGHTS).sum(axis=-1) * half
    val = nodes[cell] + partial
    val = val + params.K_saturated * np.maximum(np.abs(u) - table.u_star, 0.0)
    out = np.sign(u) * val
    return out if out.ndim else float(out)


@dataclass
class CertificationReport:
    """Outcome of the sampled H1-H3 checks. ``passed`` is the conjunction of the flags."""

    fd_max_error: float
    theta_prime_min: float
    theta_prime_max: float
    growth_min: float
    holder_max_excess: float
    junction_residuals: dict
    grid_monotone: bool
    k_zero_iff_dry: bool
    fd_tol: float = 1e-6
    growth_tol: float = 1e-12
    holder_tol: float = 1e-10
    junction_tol: float = 1e-4
    notes: list = field(default_factory=list)

    @property
    def flags(self) -> dict:
        return {
            "fd": self.fd_max_error <= self.fd_tol,
            "theta_prime_range": -1e-15 <= self.theta_prime_min and self.theta_prime_max <= 1.0 + 1e-15,
            "growth": self.growth_min >= -self.growth_tol,
            "holder": self.holder_max_excess <= self.holder_tol,
            "junctions": max(self.junction_residuals.values()) <= self.junction_tol,
            "monotone": self.grid_monotone,
            "k_zero_iff_dry": self.k_zero_iff_dry,
        }

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def rows(self):
        yield ("fd_max_error", self.fd_max_error, self.flags["fd"])
        yield ("theta_prime_min", self.theta_prime_min, self.flags["theta_prime_range"])
        yield ("theta_prime_max", self.theta_prime_max, self.flags["theta_prime_range"])
        yield ("growth_min", self.growth_min, self.flags["growth"])
        yield ("holder_max_excess", self.holder_max_excess, self.flags["holder"])
        for key, val in self.junction_residuals.items():
            yield (f"junction_{key}", val, val <= self.junction_tol)
        yield ("grid_monotone", float(self.grid_monotone), self.grid_monotone)
        yield ("k_zero_iff_dry", float(self.k_zero_iff_dry), self.k_zero_iff_dry)


def certify_hypotheses(params: SoilParams, table: ConstitutiveTable, n_probe: int = 10_000,
                       seed: int = 0, fd_step: float = 1e-6) -> CertificationReport:
    """Sample the structural hypotheses on the extended functions.

    Checks theta' against centred differences, the growth bound
    ``theta(eta) eta >= eta^2 / (2 u*)`` on ``[-3u*, 3u*]``, the Hoelder bound of
    the inverse on ``[0, 2]`` and C^1 continuity at the junctions 0 and u*.
    """
    rng = np.random.default_rng(seed)
    us = table.u_star
    h = fd_step

    probes = rng.uniform(-us, 3.0 * us, n_probe)
    junctions = np.array([0.0, us, 2.0 * us])
    away = np.min(np.abs(probes[:, None] - junctions[None, :]), axis=1) > 4.0 * h
    p = probes[away]
    fd = (theta_extended(p + h, table) - theta_extended(p - h, table)) / (2.0 * h)
    tp = theta_prime(p, table)
    fd_err = float(np.max(np.abs(fd - tp))) if p.size else 0.0
    tp_all = theta_prime(np.concatenate([probes, junctions]), table)

    g = np.concatenate([rng.uniform(-3.0 * us, 3.0 * us, n_probe), np.linspace(-3 * us, 3 * us, 1001)])
    growth = float(np.min(theta_extended(g, table) * g - table.alpha * g * g))

    t1 = rng.uniform(0.0, 2.0, n_probe)
    t2 = rng.uniform(0.0, 2.0, n_probe)
    # pairs hugging the singular point theta = 1 are where the bound is tightest
    t1[: n_probe // 4] = 1.0
    t2[: n_probe // 4] = 1.0 - np.logspace(-12, 0, n_probe // 4)
    du = np.abs(inverse_theta(t1, table) - inverse_theta(t2, table))
    holder = float(np.max(du - table.C_holder * np.abs(t1 - t2) ** table.delta_holder))

    hj = 1e-6
    junction = {}
    for name, x in (("0", 0.0), ("u_star", us)):
        left = (theta_extended(x, table) - theta_extended(x - hj, table)) / hj
        right = (theta_extended(x + hj, table) - theta_extended(x, table)) / hj
        junction[f"{name}_slope"] = abs(left - right)
        junction[f"{name}_value"] = abs(theta_extended(x - 1e-14, table) - theta_extended(x + 1e-14, table))

    # K vanishes exactly where theta does, for this family
    kprobe = np.concatenate([[0.0], np.abs(probes)])
    kvals = conductivity_K(kprobe, params, table)
    dry = np.abs(theta_extended(kprobe, table)) < THETA_FLOOR
    k_iff = bool(np.all((kvals == 0.0) == dry))

    return CertificationReport(
        fd_max_error=fd_err,
        theta_prime_min=float(tp_all.min()),
        theta_prime_max=float(tp_all.max()),
        growth_min=growth,
        holder_max_excess=holder,
        junction_residuals=junction,
        grid_monotone=bool(np.all(np.diff(table.theta_grid) > 0.0)),
        k_zero_iff_dry=k_iff,
        notes=["degeneracy set: K(eta) = 0 iff theta(eta) = 0 (checked pointwise)"],
    )


class VanGenuchtenMualem:
    """Bundle of ``SoilParams`` and its table, with the interface the solver uses."""

    def __init__(self, params: SoilParams, n_samples: int = 2048):
        self.params = params
        self.table = build_table(params, n_samples)

    @property
    def u_star(self) -> float:
        return self.table.u_star

    @property
    def L_theta(self) -> float:
        return self.table.L_theta

    def theta(self, u):
        return theta_extended(u, self.table)

    def theta_prime(self, u):
        return theta_prime(u, self.table)

    def conductivity(self, u):
        return conductivity_K(u, self.params, self.table)

    def kbar_z(self, u):
        return kbar_z(u, self.params, self.table)

    def phi(self, u):
        return phi_kirchhoff(u, self.params, self.table)


@dataclass(frozen=True)
class LinearModel:
    """``theta(u) = u``, constant conductivity and no gravity; a verification anchor."""

    K: float = 1.0
    u_star: float | None = None
    L_theta: float = 1.0

    def theta(self, u):
        return np.asarray(u, dtype=float).copy()

    def theta_prime(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def conductivity(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.K)

    def kbar_z(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def phi(self, u):
        return self.K * np.asarray(u, dtype=float)


def corrupted(table: ConstitutiveTable, **changes) -> ConstitutiveTable:
    """Copy of ``table`` with replaced grids; used to build negative controls."""
    return replace(table, **changes)
