"""Semi-implicit finite element solver for the bounded u-formulation of Richards' equation.

Modules: ``constitutive`` (transformed van Genuchten-Mualem family),
``mesh`` and ``assembly`` (P1 elements), ``lsolver`` (L-scheme),
``timestepper`` (frozen-coefficient Euler loop), ``verify`` (checks and
studies), ``config`` and ``cli``.
"""

__version__ = "0.1.0"

from .constitutive import LinearModel, SoilParams, VanGenuchtenMualem, build_table, certify_hypotheses
from .lsolver import LschemeConfig
from .timestepper import MeshSpec, Scenario, Stepper, run, run_regularized

__all__ = ["LinearModel", "SoilParams", "VanGenuchtenMualem", "build_table", "certify_hypotheses",
           "LschemeConfig", "MeshSpec", "Scenario", "Stepper", "run", "run_regularized", "__version__"]
