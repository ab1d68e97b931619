"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's ODE table: saturation is
obtained from adaptive quadrature of the transform and a scalar root finder.
"""

import math

import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from richards_dd.constitutive import SoilParams, build_table

TRANSFORM = dict(b=0.6, c=5.0 / 3.0)
VGM = dict(a=5.0 / 3.0, m=0.6)


def transform_quad(theta, b, c):
    """``U(theta) = int_0^theta (1 - s^c)^-b ds`` by quadrature.

    Substituting ``s = 1 - w^p``, ``p = 1/(1-b)`` removes the endpoint singularity.
    """
    if theta <= 0.0:
        return theta
    p = 1.0 / (1.0 - b)

    def g(w):
        if w == 0.0:
            return p * c ** (-b)
        d = w**p
        if d >= 1.0:
            return p * w ** (p - 1.0)
        return p * w ** (p - 1.0) * (-math.expm1(c * math.log1p(-d))) ** (-b)

    w_lo = (1.0 - theta) ** (1.0 - b)
    val, _ = quad(g, w_lo, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def ustar_quad(b, c):
    return transform_quad(1.0, b, c)


def theta_oracle(eta, b, c):
    """Invert the quadrature transform with a bracketing root finder."""
    us = ustar_quad(b, c)
    if eta <= 0.0:
        return eta
    if eta >= us:
        return 1.0
    return brentq(lambda th: transform_quad(th, b, c) - eta, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


@pytest.fixture(scope="session")
def soil():
    return SoilParams(b=TRANSFORM["b"], c=TRANSFORM["c"], a=VGM["a"], m=VGM["m"])


@pytest.fixture(scope="session")
def table(soil):
    return build_table(soil)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record a one-line PASS/FAIL summary shown at the end of the session."""
    lines = request.config._acceptance_lines

    def _report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return ok

    return _report
