"""Reference profiles: the Gagliardo-Nirenberg extremal W_p, the instanton family, and u_0.

W_p is the positive radial solution of

    -lap W + (1/delta_p - 1) W = (2/(p delta_p)) W^{p-1},

found by shooting on W(0).  Too large a start crosses zero, too small a start turns
back up before decaying; bisection squeezes the start value between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from kirchnorm.field import (
    fd_weights,
    RadialField,
    RadialGrid,
    energy,
    fiber_of,
    mass_norm,
    normalize_mass,
    pohozaev_relative,
    raw_grad_sq,
    raw_mass_sq,
)
from kirchnorm.landscape import eval_fiber_second_derivative
from kirchnorm.model import ModelParams, RegimeError, delta_exponent
from kirchnorm.residuals import least_squares_multiplier, pde_residual
from kirchnorm.results import Branch, SolveResult

SERIES_RADIUS = 1e-3


class ShootingError(RuntimeError):
    pass


class FixedPointError(RuntimeError):
    def __init__(self, msg: str, stiffness: float, defect: float):
        super().__init__(msg)
        self.stiffness = stiffness
        self.defect = defect


@dataclass(frozen=True)
class ShootingConfig:
    """Controls for the W_p shooting.

    ``bracket_lo``/``bracket_hi`` of None start from the constant equilibrium and
    expand by doubling until the bracket straddles the dichotomy.
    """

    ode_step: float = 0.5
    bracket_lo: Optional[float] = None
    bracket_hi: Optional[float] = None
    decay_threshold: float = 1e-6
    max_bisections: int = 200
    rtol: float = 3e-14
    atol: float = 1e-16

    def __post_init__(self):
        if not self.ode_step > 0:
            raise ValueError("ode_step must be positive")
        if not 0 < self.decay_threshold <= 1e-6:
            raise ValueError("decay_threshold must lie in (0, 1e-6]")
        if self.bracket_lo is not None and self.bracket_hi is not None and not self.bracket_lo < self.bracket_hi:
            raise ValueError("bracket_lo must be below bracket_hi")
        if self.max_bisections < 1:
            raise ValueError("max_bisections must be positive")


@dataclass(frozen=True)
class WpCoefficients:
    p: float
    kappa_sq: float
    k: float

    @classmethod
    def of(cls, p: float) -> "WpCoefficients":
        if not 2.0 < p < 6.0:
            raise RegimeError(f"W_p exists for 2 < p < 6, got p={p}")
        d = delta_exponent(p)
        return cls(p, 1.0 / d - 1.0, 2.0 / (p * d))

    @property
    def kappa(self) -> float:
        return math.sqrt(self.kappa_sq)

    @property
    def equilibrium(self) -> float:
        return (self.kappa_sq / self.k) ** (1.0 / (self.p - 2.0))

    def rhs_value(self, w):
        return self.kappa_sq * w - self.k * np.abs(w) ** (self.p - 2.0) * w


@dataclass(frozen=True)
class _Shot:
    w0: float
    crossed: bool
    stop: float
    dense: object


def _series(co: WpCoefficients, w0: float, r):
    """w0 + w2 r^2 + w4 r^4 about the regular center."""
    f0 = co.rhs_value(w0)
    df = co.kappa_sq - co.k * (co.p - 1.0) * w0 ** (co.p - 2.0)
    w2 = f0 / 6.0
    w4 = df * w2 / 20.0
    return w0 + w2 * r**2 + w4 * r**4, 2 * w2 * r + 4 * w4 * r**3


def _shoot(co: WpCoefficients, w0: float, cfg: ShootingConfig, r_end: float) -> _Shot:
    y0 = np.array(_series(co, w0, SERIES_RADIUS))

    def rhs(r, y):
        return [y[1], -2.0 / r * y[1] + co.rhs_value(y[0])]

    def crosses(r, y):
        return y[0]

    crosses.terminal = True
    crosses.direction = -1

    def turns(r, y):
        return y[1]

    turns.terminal = True
    turns.direction = 1

    sol = solve_ivp(
        rhs,
        (SERIES_RADIUS, r_end),
        y0,
        method="DOP853",
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.ode_step,
        events=[crosses, turns],
        dense_output=True,
    )
    if sol.status < 0:
        raise ShootingError(f"integration failed at W(0)={w0}: {sol.message}")
    crossed = len(sol.t_events[0]) > 0
    turned = len(sol.t_events[1]) > 0
    if not (crossed or turned):
        raise ShootingError(f"W(0)={w0}: neither crossing nor turning before r={r_end}; step too coarse or r_end too short")
    return _Shot(w0, crossed, float(sol.t[-1]), sol.sol)


def _bisect(co: WpCoefficients, cfg: ShootingConfig, r_end: float) -> tuple[_Shot, _Shot]:
    lo = cfg.bracket_lo if cfg.bracket_lo is not None else co.equilibrium * (1.0 + 1e-3)
    hi = cfg.bracket_hi if cfg.bracket_hi is not None else 2.0 * co.equilibrium
    shot_lo, shot_hi = _shoot(co, lo, cfg, r_end), _shoot(co, hi, cfg, r_end)
    if shot_lo.crossed:
        raise ShootingError(f"lower start {lo} already crosses zero; bracket does not straddle")
    auto = cfg.bracket_hi is None
    while not shot_hi.crossed:
        if not auto or hi > 1e6 * co.equilibrium:
            raise ShootingError(f"upper start {hi} does not cross zero; bracket does not straddle")
        shot_lo, hi = shot_hi, 2.0 * hi
        shot_hi = _shoot(co, hi, cfg, r_end)
    for _ in range(cfg.max_bisections):
        mid = 0.5 * (shot_lo.w0 + shot_hi.w0)
        if mid <= shot_lo.w0 or mid >= shot_hi.w0:
            break
        shot = _shoot(co, mid, cfg, r_end)
        if shot.crossed:
            shot_hi = shot
        else:
            shot_lo = shot
    return shot_lo, shot_hi


def wp_grid(p: float) -> RadialGrid:
    """Default grid wide enough for the exponential tail of W_p."""
    kappa = WpCoefficients.of(p).kappa
    r_max = max(1e3, 10.0 ** math.ceil(math.log10(80.0 / kappa)))
    return RadialGrid.cached(1e-5, r_max, 4096)


@dataclass(frozen=True)
class WpProfile:
    """W_p as a function of r: center series, integrated orbit, then the linear tail."""

    coefficients: WpCoefficients
    w0: float
    r_splice: float
    tail_c: float
    dense: object

    def __call__(self, r) -> np.ndarray:
        co = self.coefficients
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r < SERIES_RADIUS
        outer = r > self.r_splice
        mid = ~inner & ~outer
        out[inner] = _series(co, self.w0, r[inner])[0]
        out[mid] = self.dense(r[mid])[0]
        with np.errstate(under="ignore"):
            out[outer] = self.tail_c * np.exp(-co.kappa * r[outer]) / r[outer]
        return out


@lru_cache(maxsize=64)
def wp_profile(p: float, cfg: ShootingConfig = ShootingConfig()) -> WpProfile:
    """Shoot for W_p.

    Past the radius where W drops below ``decay_threshold * W(0)`` the numerical orbit is
    replaced by the exact linear tail C e^{-kappa r}/r, matched in value there.
    """
    co = WpCoefficients.of(float(p))
    r_end = 400.0 / co.kappa + 100.0
    shot, _ = _bisect(co, cfg, r_end)
    # the undershooting orbit stays positive and follows W until it turns
    target = cfg.decay_threshold * shot.w0
    r_probe = np.linspace(SERIES_RADIUS, shot.stop, 20001)
    w_probe, dw_probe = shot.dense(r_probe)
    below = np.nonzero((w_probe < target) & (dw_probe < 0))[0]
    if len(below) == 0:
        raise ShootingError(
            f"p={p}: orbit leaves W at r={shot.stop:.3g} before decaying to {cfg.decay_threshold:g} W(0); "
            "bisection did not resolve the decaying orbit"
        )
    r_s = float(r_probe[below[0]])
    w_s = float(shot.dense(r_s)[0])
    return WpProfile(co, shot.w0, r_s, w_s * r_s * math.exp(co.kappa * r_s), shot.dense)


def solve_wp(p: float, cfg: ShootingConfig = ShootingConfig(), grid: Optional[RadialGrid] = None) -> RadialField:
    """Positive radial W_p sampled on ``grid`` (default: ``wp_grid(p)``)."""
    prof = wp_profile(float(p), cfg)
    grid = grid or wp_grid(p)
    return RadialField(grid, prof(grid.nodes))


def wp_ode_residual(prof: WpProfile, r_lo: float = 0.1, step: float = 0.01, floor: float = 1e-6) -> float:
    """Max |W'' + 2W'/r - kappa^2 W + k W^{p-1}| over r >= r_lo while W > floor W(0).

    Derivatives come from eighth-order central differences on a uniform r-grid, so the
    check sees the sampled profile only, not the integrator's right-hand side.
    """
    co = prof.coefficients
    r_hi = prof.r_splice
    r = np.arange(r_lo, r_hi, step)
    offs = np.arange(-4, 5)
    d1 = fd_weights(offs, 1) / step
    d2 = fd_weights(offs, 2) / step**2
    samples = prof(r[:, None] + offs[None, :] * step)
    w = samples[:, 4]
    res = samples @ d2 + 2.0 / r * (samples @ d1) - co.rhs_value(w)
    mask = w > floor * prof.w0
    return float(np.max(np.abs(res[mask])))


# ---------------------------------------------------------------------------
# instanton family


def instanton_profile(eps: float, r):
    """Aubin-Talenti bubble 3^{1/4} (eps/(eps^2 + r^2))^{1/2}."""
    r = np.asarray(r, dtype=float)
    return 3.0**0.25 * np.sqrt(eps / (eps * eps + r * r))


def cutoff(r):
    """C^2 radial cutoff: 1 on [0,1], 0 on [2, inf), quintic smoothstep between."""
    t = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class InstantonSuite:
    eps: float
    U: RadialField
    u_cut: RadialField
    v_norm: RadialField


def instanton(eps: float, c: float = 1.0, grid: Optional[RadialGrid] = None) -> InstantonSuite:
    """U_eps, its truncation eta U_eps, and the truncation rescaled to mass c."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not c > 0:
        raise ValueError(f"mass c must be positive, got {c}")
    grid = grid or RadialGrid.cached()
    U = RadialField.from_function(grid, lambda r: instanton_profile(eps, r))
    u_cut = U.with_values(U.values * cutoff(grid.nodes))
    return InstantonSuite(eps, U, u_cut, normalize_mass(u_cut, c))


# ---------------------------------------------------------------------------
# mu = 0 ground state


@dataclass(frozen=True)
class _Scaling:
    alpha: float
    beta: float
    grad_sq: float


def _scaling(co: WpCoefficients, stiffness: float, c: float, w_mass_sq: float, w_grad_sq: float) -> _Scaling:
    p = co.p
    ak = stiffness * co.k
    beta = (c * c / (w_mass_sq * ak ** (2.0 / (p - 2.0)))) ** ((p - 2.0) / (10.0 - 3.0 * p))
    alpha = (ak * beta * beta) ** (1.0 / (p - 2.0))
    return _Scaling(alpha, beta, alpha * alpha / beta * w_grad_sq)


def solve_limit_ground_state(
    model: ModelParams,
    cfg: ShootingConfig = ShootingConfig(),
    damping: float = 0.5,
    tol: float = 1e-14,
    max_iter: int = 500,
    grid: Optional[RadialGrid] = None,
) -> SolveResult:
    """u_0 = alpha W_p(beta r) with the effective stiffness A = a + b|grad u_0|^2 at a fixed point.

    For a trial A, the mass-c ground state of -A lap u = lam u + u^{p-1} is alpha W_p(beta r)
    with alpha^{p-2} = A k beta^2 and alpha^2 beta^{-3} |W_p|_2^2 = c^2.  A is then updated by
    A <- (1 - damping) A + damping (a + b|grad u|^2).
    """
    if model.mu != 0:
        raise RegimeError("the limit ground state needs mu = 0")
    if not model.p < 6.0:
        raise RegimeError("the limit ground state needs p < 6; at p = 6 use the critical energy level")
    co = WpCoefficients.of(model.p)
    w = solve_wp(model.p, cfg, grid)
    w_mass_sq = raw_mass_sq(w.values, w.grid)
    w_grad_sq = raw_grad_sq(w.values, w.grid)

    stiffness = model.a
    defect = math.inf
    defects = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        sc = _scaling(co, stiffness, model.c, w_mass_sq, w_grad_sq)
        target = model.a + model.b * sc.grad_sq
        defect = abs(target - stiffness) / target
        defects.append(defect)
        if defect <= tol:
            stiffness = target
            break
        stiffness = target if model.b == 0 else (1.0 - damping) * stiffness + damping * target
    else:
        raise FixedPointError(f"stiffness iteration did not converge, defect {defect:.3e}", stiffness, defect)

    sc = _scaling(co, stiffness, model.c, w_mass_sq, w_grad_sq)
    u = RadialField(w.grid, sc.alpha * sc.beta ** (-1.5) * w.values, math.log(sc.beta))
    lam = -stiffness * sc.beta**2 * co.kappa_sq
    return SolveResult(
        field=u,
        lam=lam,
        energy=energy(model, u),
        pohozaev_residual=pohozaev_relative(model, u),
        grad_residual=pde_residual(model, u, lam),
        branch=Branch.P_MINUS,
        iterations=iterations,
        converged=True,
        fiber_curvature=eval_fiber_second_derivative(fiber_of(model, u), 0.0),
        lambda_least_squares=least_squares_multiplier(model, u),
        message=f"mass {mass_norm(u):.15g}",
        # relative stiffness defects |a + bT(A) - A| / (a + bT(A)), one per iteration
        history=tuple(defects),
    )

