"""Value types returned by the solvers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Optional

from kirchnorm.field import RadialField, grad_norm, lp_norm_p, mass_norm


class Branch(str, enum.Enum):
    """Which part of the Pohozaev set a critical point lies on (sign of Psi''(0))."""

    P_PLUS = "PPlus"
    P_MINUS = "PMinus"


@dataclass(frozen=True)
class SolveResult:
    field: RadialField
    lam: float
    energy: float
    pohozaev_residual: float
    grad_residual: float
    branch: Branch
    iterations: int
    converged: bool = True
    fiber_curvature: float = math.nan
    lambda_least_squares: Optional[float] = None
    message: str = ""
    # accepted reduced-functional values, first to last
    history: tuple = ()

    def summary(self) -> dict:
        u = self.field
        return {
            "lambda": self.lam,
            "lambda_least_squares": self.lambda_least_squares,
            "energy": self.energy,
            "pohozaev_residual": self.pohozaev_residual,
            "grad_residual": self.grad_residual,
            "branch": self.branch.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "fiber_curvature": self.fiber_curvature,
            "message": self.message,
            "mass_norm": mass_norm(u),
            "grad_norm": grad_norm(u),
            "l6_norm6": lp_norm_p(u, 6.0),
            "dilation_log": u.dilation_log,
        }


@dataclass(frozen=True)
class SweepRow:
    mu: float
    m_local: Optional[float] = None
    sigma_mp: Optional[float] = None
    grad_norm_local: Optional[float] = None
    l6_norm6: Optional[float] = None
    lambda_local: Optional[float] = None
    lambda_mp: Optional[float] = None
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list:
        return [getattr(self, name) for name in self.columns()]
