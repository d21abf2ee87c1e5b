"""Normalized solutions of the Kirchhoff equation with combined power nonlinearities.

    -(a + b||grad u||^2) Laplace u = lambda u + |u|^(p-2) u + mu |u|^(q-2) u   in R^3,
    ||u||_2 = c.

The package evaluates the closed-form constants and thresholds of the problem,
classifies fiber-map landscapes along the mass-preserving dilation, and computes
the local-minimum and mountain-pass critical points on radial grids.
"""

from kirchnorm.model import ModelParams, Regime, RegimeError, delta_exponent
from kirchnorm.field import (
    RadialField,
    RadialGrid,
    dilate,
    energy,
    fiber_of,
    grad_norm,
    lp_norm,
    mass_norm,
    normalize_mass,
    pohozaev,
)
from kirchnorm.landscape import (
    FiberParams,
    LandscapeKind,
    LandscapeReport,
    barrier,
    classify,
    classify_mixed,
    classify_supercritical,
    eval_fiber,
    eval_fiber_derivative,
)
from kirchnorm.constants import ConstantsBundle, gn_constant, sobolev_constant, thresholds
from kirchnorm.results import Branch, SolveResult, SweepRow
from kirchnorm.residuals import least_squares_multiplier, multiplier_estimate, pde_residual
from kirchnorm.groundstate import ShootingConfig, instanton, solve_limit_ground_state, solve_wp
from kirchnorm.solver import SolverConfig, local_minimize, mountain_pass, mu_sweep, project_to_pohozaev

__all__ = [
    "Branch",
    "ConstantsBundle",
    "FiberParams",
    "LandscapeKind",
    "LandscapeReport",
    "ModelParams",
    "RadialField",
    "RadialGrid",
    "Regime",
    "RegimeError",
    "ShootingConfig",
    "SolveResult",
    "SolverConfig",
    "SweepRow",
    "barrier",
    "classify",
    "classify_mixed",
    "classify_supercritical",
    "delta_exponent",
    "dilate",
    "energy",
    "eval_fiber",
    "eval_fiber_derivative",
    "fiber_of",
    "gn_constant",
    "grad_norm",
    "instanton",
    "least_squares_multiplier",
    "local_minimize",
    "lp_norm",
    "mass_norm",
    "mountain_pass",
    "mu_sweep",
    "multiplier_estimate",
    "normalize_mass",
    "pde_residual",
    "pohozaev",
    "project_to_pohozaev",
    "sobolev_constant",
    "solve_limit_ground_state",
    "solve_wp",
    "thresholds",
]

__version__ = "0.1.0"
