"""Fiber-map landscapes f(t) = a t^2 + b t^4 - c t^p - d t^q, evaluated along s = log t.

Along the dilation s * u the energy is Psi(s) = f(e^s) with coefficients built from the
norms of u.  Everything here works in s, with exponentials combined in log space so
that extreme dilations neither overflow nor lose the sign of the result.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.optimize import brentq

from kirchnorm.model import GUARD, ModelParams, RegimeError

if TYPE_CHECKING:
    from kirchnorm.constants import ConstantsBundle

ROOT_XTOL = 1e-12
COALESCE_WIDTH = 1e-10
SCAN_SPACING = 0.01
SCAN_HALF_WIDTH = 40.0
MAX_SCAN_POINTS = 200_001


@dataclass(frozen=True)
class FiberParams:
    a_tilde: float
    b_tilde: float
    c_tilde: float
    d_tilde: float
    p_tilde: float
    q_tilde: float

    def __post_init__(self):
        vals = (self.a_tilde, self.b_tilde, self.c_tilde, self.d_tilde, self.p_tilde, self.q_tilde)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"fiber coefficients must be finite: {vals}")
        if min(self.a_tilde, self.b_tilde, self.c_tilde, self.d_tilde) < 0:
            raise ValueError("fiber coefficients must be nonnegative")

    @property
    def regime_tag(self) -> str:
        if self.q_tilde < 2.0 and self.p_tilde > 4.0:
            return "mixed"
        if 4.0 < self.q_tilde < self.p_tilde or (self.d_tilde == 0 and self.p_tilde > 4.0):
            return "supercritical"
        return "other"

    def shifted(self, sigma: float) -> "FiberParams":
        """Coefficients of s -> Psi(s + sigma)."""
        return FiberParams(
            self.a_tilde * math.exp(2 * sigma),
            self.b_tilde * math.exp(4 * sigma),
            self.c_tilde * math.exp(self.p_tilde * sigma),
            self.d_tilde * math.exp(self.q_tilde * sigma),
            self.p_tilde,
            self.q_tilde,
        )


class LandscapeKind(str, enum.Enum):
    TWO_CRITICAL = "TwoCritical"
    UNIQUE_MAX = "UniqueMax"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class LandscapeReport:
    kind: LandscapeKind
    s_min: Optional[float] = None
    s_max: Optional[float] = None
    zero_lo: Optional[float] = None
    zero_hi: Optional[float] = None
    value_at_min: Optional[float] = None
    value_at_max: Optional[float] = None
    n_critical: int = 0
    # value of the sufficient two-critical-point inequality (> 1 means it holds)
    sufficient_ratio: Optional[float] = None

    @property
    def sufficient_condition(self) -> Optional[bool]:
        return None if self.sufficient_ratio is None else self.sufficient_ratio > 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["sufficient_condition"] = self.sufficient_condition
        return d


# ---------------------------------------------------------------------------
# evaluation


def _terms(fp: FiberParams, order: int):
    """(log|coef|, exponent, sign) for the nonzero terms of the order-th derivative."""
    raw = (
        (fp.a_tilde, 2.0, 1.0),
        (fp.b_tilde, 4.0, 1.0),
        (fp.c_tilde, fp.p_tilde, -1.0),
        (fp.d_tilde, fp.q_tilde, -1.0),
    )
    out = []
    for coef, k, sign in raw:
        weight = coef * k**order
        if weight > 0:
            out.append((math.log(weight), k, sign))
    return out


def _scaled(fp: FiberParams, s, order: int):
    """Return (m, r) with the order-th derivative equal to r * exp(m); r carries the sign."""
    s = np.asarray(s, dtype=float)
    terms = _terms(fp, order)
    if not terms:
        return np.full(s.shape, -np.inf), np.zeros(s.shape)
    logs = np.stack([lg + k * s for lg, k, _ in terms])
    m = logs.max(axis=0)
    # terms more than ~700 e-folds below the leader underflow to zero here
    r = sum(sign * np.exp(logs[i] - m) for i, (_, _, sign) in enumerate(terms))
    return m, r


def _eval(fp: FiberParams, s, order: int):
    m, r = _scaled(fp, s, order)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(r == 0, 0.0, r * np.exp(np.minimum(m, 709.0)) * np.exp(np.maximum(m - 709.0, 0.0)))
    return out.item() if out.ndim == 0 else out


def eval_fiber(fp: FiberParams, s):
    """Psi(s) = a~ e^{2s} + b~ e^{4s} - c~ e^{p~ s} - d~ e^{q~ s}; overflow saturates to +-inf."""
    return _eval(fp, s, 0)


def eval_fiber_derivative(fp: FiberParams, s):
    """Psi'(s); at s = 0 this is the Pohozaev functional of the field fp was built from."""
    return _eval(fp, s, 1)


def eval_fiber_second_derivative(fp: FiberParams, s):
    return _eval(fp, s, 2)


# ---------------------------------------------------------------------------
# root location


def _scan_window(fp: FiberParams) -> tuple[float, float]:
    """Window holding every sign change: outside it one term dominates the rest."""
    terms = _terms(fp, 1)
    lo, hi = -SCAN_HALF_WIDTH, SCAN_HALF_WIDTH
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            (li, ki, _), (lj, kj, _) = terms[i], terms[j]
            if abs(ki - kj) < 1e-14:
                continue
            cross = (lj - li) / (ki - kj)
            pad = math.log(8.0) / abs(ki - kj) + 5.0
            lo, hi = min(lo, cross - pad), max(hi, cross + pad)
    return lo, hi


def _sign_changes(fp: FiberParams, order: int, lo: float, hi: float):
    n = int(min(MAX_SCAN_POINTS, max(2001, math.ceil((hi - lo) / SCAN_SPACING) + 1)))
    grid = np.linspace(lo, hi, n)
    _, r = _scaled(fp, grid, order)
    sgn = np.sign(r)
    # zeros exactly on a node are assigned to the following interval
    nz = sgn != 0
    grid, sgn = grid[nz], sgn[nz]
    idx = np.nonzero(sgn[:-1] != sgn[1:])[0]
    return [(grid[i], grid[i + 1], sgn[i]) for i in idx]


def _root(fp: FiberParams, order: int, a: float, b: float) -> float:
    def f(s):
        return float(_scaled(fp, s, order)[1])

    return brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def _zero_beyond(fp: FiberParams, start: float) -> Optional[float]:
    """First zero of Psi to the right of start, where Psi(start) > 0 and Psi(+inf) < 0."""
    step = 1.0
    b = start + step
    while float(_scaled(fp, b, 0)[1]) > 0:
        step *= 2
        b = start + step
        if step > 1e6:
            return None
    return _root(fp, 0, start, b)


def _zero_between(fp: FiberParams, a: float, b: float) -> Optional[float]:
    fa, fb = float(_scaled(fp, a, 0)[1]), float(_scaled(fp, b, 0)[1])
    if fa * fb > 0:
        return None
    return _root(fp, 0, a, b)


def _cpq(p_tilde: float, q_tilde: float) -> float:
    """X^{(4-q)/(p-4)} - X^{(p-q)/(p-4)} with X = 8(4-q)/(p(p-2)(p-q))."""
    x = 8.0 * (4.0 - q_tilde) / (p_tilde * (p_tilde - 2.0) * (p_tilde - q_tilde))
    e1 = (4.0 - q_tilde) / (p_tilde - 4.0)
    e2 = (p_tilde - q_tilde) / (p_tilde - 4.0)
    return x**e1 - x**e2


def sufficient_ratio(fp: FiberParams) -> float:
    """Left-hand side of the sufficient condition for a negative local minimum plus a positive maximum.

    The landscape is guaranteed to have exactly that shape when the returned value exceeds 1.
    """
    a, b, c, d, p, q = (fp.a_tilde, fp.b_tilde, fp.c_tilde, fp.d_tilde, fp.p_tilde, fp.q_tilde)
    k = p - 4.0
    log_t1 = math.log(a) - math.log(d) + (2.0 - q) / k * (math.log(b) - math.log(c)) if a > 0 else -math.inf
    log_t2 = (p - q) / k * math.log(b) - math.log(d) - (4.0 - q) / k * math.log(c)
    return _cpq(p, q) * (math.exp(log_t1) + math.exp(log_t2))


def classify_mixed(fp: FiberParams) -> LandscapeReport:
    """Locate s_u < c_u < t_u < d_u for q~ in (0, 2), p~ > 4.

    The sufficient inequality is evaluated and stored, but the returned kind always
    comes from a sign-change scan of Psi' followed by bracketed root refinement.
    """
    if not (0.0 < fp.q_tilde < 2.0 - GUARD and fp.p_tilde > 4.0 + GUARD):
        raise RegimeError(f"mixed landscape needs q~ in (0,2), p~ > 4; got {fp.q_tilde}, {fp.p_tilde}")
    if fp.b_tilde <= 0 or fp.c_tilde <= 0:
        raise RegimeError("mixed landscape needs b~ > 0 and c~ > 0")
    if fp.d_tilde == 0:
        return _classify_single_max(fp, None)

    ratio = sufficient_ratio(fp)
    lo, hi = _scan_window(fp)
    changes = _sign_changes(fp, 1, lo, hi)
    unclassified = LandscapeReport(LandscapeKind.UNCLASSIFIED, n_critical=len(changes), sufficient_ratio=ratio)
    if len(changes) != 2 or changes[0][2] > 0:
        return unclassified
    s_u = _root(fp, 1, changes[0][0], changes[0][1])
    t_u = _root(fp, 1, changes[1][0], changes[1][1])
    if t_u - s_u < COALESCE_WIDTH:
        return unclassified
    v_min, v_max = eval_fiber(fp, s_u), eval_fiber(fp, t_u)
    if not (v_min < 0 < v_max):
        return unclassified
    c_u = _zero_between(fp, s_u, t_u)
    d_u = _zero_beyond(fp, t_u)
    if c_u is None or d_u is None:
        return unclassified
    return LandscapeReport(
        LandscapeKind.TWO_CRITICAL,
        s_min=s_u,
        s_max=t_u,
        zero_lo=c_u,
        zero_hi=d_u,
        value_at_min=v_min,
        value_at_max=v_max,
        n_critical=2,
        sufficient_ratio=ratio,
    )


def _classify_single_max(fp: FiberParams, ratio: Optional[float]) -> LandscapeReport:
    lo, hi = _scan_window(fp)
    changes = _sign_changes(fp, 1, lo, hi)
    if len(changes) != 1 or changes[0][2] < 0:
        return LandscapeReport(LandscapeKind.UNCLASSIFIED, n_critical=len(changes), sufficient_ratio=ratio)
    t_u = _root(fp, 1, changes[0][0], changes[0][1])
    v_max = eval_fiber(fp, t_u)
    if not v_max > 0:
        return LandscapeReport(LandscapeKind.UNCLASSIFIED, n_critical=1, sufficient_ratio=ratio)
    return LandscapeReport(
        LandscapeKind.UNIQUE_MAX,
        s_max=t_u,
        zero_hi=_zero_beyond(fp, t_u),
        value_at_max=v_max,
        n_critical=1,
        sufficient_ratio=ratio,
    )


def classify_supercritical(fp: FiberParams) -> LandscapeReport:
    """Unique maximum t_u of Psi when every negative term has exponent above 4."""
    if not fp.p_tilde > 4.0 + GUARD or (fp.d_tilde > 0 and not fp.q_tilde > 4.0 + GUARD):
        raise RegimeError(f"supercritical landscape needs p~, q~ > 4; got {fp.p_tilde}, {fp.q_tilde}")
    if fp.b_tilde <= 0 or fp.c_tilde + fp.d_tilde <= 0:
        raise RegimeError("supercritical landscape needs b~ > 0 and c~ + d~ > 0")
    return _classify_single_max(fp, None)


def classify(fp: FiberParams) -> LandscapeReport:
    """Dispatch on the exponent structure of fp."""
    if fp.d_tilde == 0 or fp.q_tilde > 4.0:
        return classify_supercritical(fp)
    return classify_mixed(fp)


# ---------------------------------------------------------------------------
# barrier


@dataclass(frozen=True)
class BarrierCurve:
    """Lower bound h(|grad u|) <= E_mu(u) on S_c, positive exactly on (R0, R1)."""

    model: ModelParams
    constants: "ConstantsBundle"
    R0: float
    R1: float
    t_max: float
    h_max: float

    @property
    def fiber(self) -> FiberParams:
        return barrier_fiber(self.model, self.constants)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return eval_fiber(self.fiber, np.log(t))

    def to_dict(self) -> dict:
        return {"R0": self.R0, "R1": self.R1, "t_max": self.t_max, "h_max": self.h_max}


def barrier_fiber(model: ModelParams, constants: "ConstantsBundle") -> FiberParams:
    cp = constants.gn_C[model.p]
    cq = constants.gn_C[model.q]
    dp, dq = model.delta_p, model.delta_q
    return FiberParams(
        a_tilde=model.a / 2.0,
        b_tilde=model.b / 4.0,
        c_tilde=cp**model.p / model.p * model.c ** (model.p * (1.0 - dp)),
        d_tilde=model.mu * cq**model.q / model.q * model.c ** (model.q * (1.0 - dq)),
        p_tilde=model.p_tilde,
        q_tilde=model.q_tilde,
    )


class BarrierError(RuntimeError):
    pass


def barrier(model: ModelParams, constants: "ConstantsBundle") -> BarrierCurve:
    """Build h and its two positive zeros R0 < R1.

    Raises
    ------
    RegimeError
        Outside the mixed regime, or when mu is not below mu^*.
    BarrierError
        When the numerical classification of h does not show two zeros.
    """
    if not model.regime.is_mixed:
        raise RegimeError(f"barrier needs the mixed regime, got {model.regime.value}")
    if constants.mu_star_upper is None or not (0 < model.mu < constants.mu_star_upper):
        raise RegimeError(f"barrier needs 0 < mu < mu^* = {constants.mu_star_upper}, got {model.mu}")
    rep = classify_mixed(barrier_fiber(model, constants))
    if rep.kind is not LandscapeKind.TWO_CRITICAL:
        raise BarrierError(f"h does not have the two-zero structure: {rep}")
    return BarrierCurve(
        model=model,
        constants=constants,
        R0=math.exp(rep.zero_lo),
        R1=math.exp(rep.zero_hi),
        t_max=math.exp(rep.s_max),
        h_max=rep.value_at_max,
    )
