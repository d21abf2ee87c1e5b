"""Closed-form constants: the Sobolev and Gagliardo-Nirenberg constants and the mu thresholds.

The thresholds mix powers whose exponents grow like 1/(p delta_p - 4), so every
product is accumulated as a sum of exponent * log terms and exponentiated once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from kirchnorm.field import RadialField, RadialGrid, grad_norm_sq, lp_norm, mass_norm
from kirchnorm.groundstate import ShootingConfig, instanton_profile, solve_wp
from kirchnorm.model import GUARD, L2_CRITICAL, L2_SUBCRITICAL_EDGE, ModelParams, RegimeError, delta_exponent, is_critical


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SobolevQuadrature:
    """Grid and check scales for the instanton quotient.

    The grid spans from deep inside the core to far into the 1/r tail; the relative
    error from truncating the tail at r_max is about 22 eps / r_max.
    """

    r_min: float = 1e-6
    r_max: float = 1e12
    n: int = 8192
    eps: float = 1.0
    check_eps: tuple = (0.25, 4.0)
    tol: float = 1e-8

    @property
    def grid(self) -> RadialGrid:
        return RadialGrid.cached(self.r_min, self.r_max, self.n)


def instanton_quotient(eps: float, grid: RadialGrid) -> float:
    """|grad U_eps|^2 / |U_eps|_6^2 by quadrature."""
    U = RadialField.from_function(grid, lambda r: instanton_profile(eps, r))
    return grad_norm_sq(U) / lp_norm(U, 6.0) ** 2


@lru_cache(maxsize=8)
def sobolev_constant(config: SobolevQuadrature = SobolevQuadrature()) -> float:
    """Best Sobolev constant S as the instanton quotient at ``config.eps``.

    Raises
    ------
    QuadratureError
        If the quotient moves by more than ``config.tol`` (relative) across ``check_eps``,
        which means the grid does not resolve the instanton at those scales.
    """
    grid = config.grid
    value = instanton_quotient(config.eps, grid)
    others = [instanton_quotient(e, grid) for e in config.check_eps]
    spread = max(abs(o / value - 1.0) for o in others) if others else 0.0
    if not spread <= config.tol:
        raise QuadratureError(f"instanton quotient varies by {spread:.3e} across eps; grid too coarse")
    return value


@lru_cache(maxsize=64)
def gn_constant(p: float, cfg: ShootingConfig = ShootingConfig()) -> float:
    """C_p = (p / (2 |W_p|_2^{p-2}))^{1/p}; at p = 6 this is S^{-1/2}."""
    p = float(p)
    delta_exponent(p)
    if is_critical(p):
        return sobolev_constant() ** -0.5
    w = solve_wp(p, cfg)
    return (p / (2.0 * mass_norm(w) ** (p - 2.0))) ** (1.0 / p)


def c_pq(p_tilde: float, q_tilde: float) -> float:
    """X^{(4-q~)/(p~-4)} - X^{(p~-q~)/(p~-4)} with X = 8(4-q~)/(p~(p~-2)(p~-q~))."""
    x = 8.0 * (4.0 - q_tilde) / (p_tilde * (p_tilde - 2.0) * (p_tilde - q_tilde))
    return x ** ((4.0 - q_tilde) / (p_tilde - 4.0)) - x ** ((p_tilde - q_tilde) / (p_tilde - 4.0))


def lambda_big(a: float, b: float, S: float) -> float:
    """Positive root of L^2 = a S + b S^2 L."""
    return 0.5 * b * S * S + math.sqrt(a * S + 0.25 * b * b * S**4)


def critical_energy(a: float, b: float, S: float) -> float:
    lam = lambda_big(a, b, S)
    return a * S * lam / 3.0 + b * S * S * lam * lam / 12.0


def _exp_sum(log_terms) -> float:
    return math.exp(math.fsum(log_terms))


def has_mixed_exponents(p: float, q: float) -> bool:
    return 2.0 < q < L2_SUBCRITICAL_EDGE - GUARD and L2_CRITICAL + GUARD < p <= 6.0


@dataclass(frozen=True)
class ConstantsBundle:
    sobolev_S: float
    gn_C: dict
    lambda_big: float
    critical_energy: float
    delta_p: float
    delta_q: float
    mu_star_upper: Optional[float] = None
    mu_star_lower: Optional[float] = None
    mu_double_star: Optional[float] = None
    c_pq: Optional[float] = None
    notes: tuple = field(default_factory=tuple)

    @property
    def mu_local_bound(self) -> Optional[float]:
        """min{mu_*, mu^*}, plus mu^** when it is defined."""
        vals = [v for v in (self.mu_star_upper, self.mu_star_lower, self.mu_double_star) if v is not None]
        return min(vals) if vals else None

    @property
    def lambda_big_cubed(self) -> float:
        """Limit of |u|_6^6 along the critical mountain-pass family as mu -> 0."""
        return self.lambda_big**3

    def to_dict(self) -> dict:
        return {
            "sobolev_S": self.sobolev_S,
            "gn_C": {repr(float(k)): v for k, v in sorted(self.gn_C.items())},
            "lambda_big": self.lambda_big,
            "lambda_big_cubed": self.lambda_big_cubed,
            "critical_energy": self.critical_energy,
            "delta_p": self.delta_p,
            "delta_q": self.delta_q,
            "mu_star_upper": self.mu_star_upper,
            "mu_star_lower": self.mu_star_lower,
            "mu_double_star": self.mu_double_star,
            "mu_local_bound": self.mu_local_bound,
            "c_pq": self.c_pq,
            "notes": list(self.notes),
        }


def thresholds(model: ModelParams, require_mixed: bool = False) -> ConstantsBundle:
    """Evaluate S, C_p, C_q, Lambda, the critical energy and the mu thresholds for ``model``.

    mu^* and mu_* (and C_{p,q}) need 2 < q < 10/3 < 14/3 < p <= 6; mu^** additionally
    needs p = 6.  Outside those ranges the fields are None, or RegimeError is raised
    when ``require_mixed`` is set.
    """
    a, b, c, p, q = model.a, model.b, model.c, model.p, model.q
    S = sobolev_constant()
    cp, cq = gn_constant(p), gn_constant(q)
    dp, dq = model.delta_p, model.delta_q
    pt, qt = model.p_tilde, model.q_tilde
    big = lambda_big(a, b, S)
    crit = critical_energy(a, b, S)
    base = dict(sobolev_S=S, gn_C={float(p): cp, float(q): cq}, lambda_big=big, critical_energy=crit, delta_p=dp, delta_q=dq)

    if not has_mixed_exponents(p, q):
        if require_mixed:
            raise RegimeError(f"thresholds need 2 < q < 10/3 and 14/3 < p <= 6, got p={p}, q={q}")
        return ConstantsBundle(**base, notes=("mu thresholds are defined only for 2 < q < 10/3 < 14/3 < p <= 6",))
    if not (a > 0 and b > 0):
        if require_mixed:
            raise RegimeError("thresholds need a > 0 and b > 0")
        return ConstantsBundle(**base, notes=("mu thresholds need a > 0 and b > 0",))

    k = pt - 4.0
    cpq = c_pq(pt, qt)
    lc = math.log(c)
    lcp_p = p * math.log(cp)
    lcq_q = q * math.log(cq)
    e1 = q * (1.0 - dq) + p * (1.0 - dp) * (2.0 - qt) / k
    e2 = q * (1.0 - dq) + p * (1.0 - dp) * (4.0 - qt) / k
    prefactor = [math.log(q), math.log(cpq), -lcq_q]

    term1 = [math.log(a / 2.0), (2.0 - qt) / k * (math.log(b * p / 4.0) - lcp_p), -e1 * lc]
    term2 = [
        (pt - qt) / k * math.log(b / 4.0),
        (4.0 - qt) / k * (math.log(p) - lcp_p),
        -e2 * lc,
    ]
    mu_upper = _exp_sum(prefactor) * (_exp_sum(term1) + _exp_sum(term2))

    mu_lower = _exp_sum(
        [
            math.log(q * k * b / (4.0 * (pt - qt))) - lcq_q,
            (4.0 - qt) / k * (math.log(p * (4.0 - qt) * b / (4.0 * (pt - qt))) - lcp_p),
            -e2 * lc,
        ]
    )

    mu_dd = None
    if is_critical(p):
        mu_dd = _exp_sum(
            [
                math.log(2.0),
                qt / 4.0 * math.log(b / dq),
                -math.log(6.0 - qt),
                -lcq_q,
                (1.0 - qt / 4.0) * math.log(12.0 * q / (4.0 - qt) * crit),
                -q * (1.0 - dq) * lc,
            ]
        )
    return ConstantsBundle(**base, mu_star_upper=mu_upper, mu_star_lower=mu_lower, mu_double_star=mu_dd, c_pq=cpq)


def auto_mu(model: ModelParams, fraction: float = 0.1) -> float:
    """fraction * min{mu_*, mu^*} (and mu^** at p = 6)."""
    bound = thresholds(model, require_mixed=True).mu_local_bound
    return fraction * bound

