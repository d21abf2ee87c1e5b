"""Problem coefficients and exponent regimes."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from fractions import Fraction

# strict-inequality guard band for regime boundaries
GUARD = 1e-12

L2_SUBCRITICAL_EDGE = 10.0 / 3.0
L2_CRITICAL = 14.0 / 3.0
SOBOLEV_CRITICAL = 6.0


class RegimeError(ValueError):
    """Exponents or coefficients fall outside the range an operation is valid on."""


class Regime(str, enum.Enum):
    MIXED = "Mixed"
    MIXED_CRITICAL = "MixedCritical"
    SUPERCRITICAL = "Supercritical"
    SUPERCRITICAL_CRITICAL = "SupercriticalCritical"
    MU_ZERO = "MuZero"

    @property
    def is_mixed(self) -> bool:
        return self in (Regime.MIXED, Regime.MIXED_CRITICAL)

    @property
    def is_supercritical(self) -> bool:
        return self in (Regime.SUPERCRITICAL, Regime.SUPERCRITICAL_CRITICAL)


def delta_exponent(p: float) -> float:
    """Return 3(p-2)/(2p), the gradient exponent in the Gagliardo-Nirenberg inequality.

    A ``Fraction`` argument gives an exact ``Fraction`` result; anything else is
    converted to float.

    Raises
    ------
    RegimeError
        If p is outside (2, 6].
    """
    if not isinstance(p, Fraction):
        p = float(p)
    if not (2 < p <= SOBOLEV_CRITICAL):
        raise RegimeError(f"exponent p={p!r} must lie in (2, 6]")
    return 3 * (p - 2) / (2 * p)


def is_critical(p: float) -> bool:
    return abs(p - SOBOLEV_CRITICAL) <= GUARD


def infer_regime(p: float, q: float, mu: float) -> Regime:
    """Classify (p, q, mu) into one of the regimes the solvers handle."""
    if not (2.0 < p <= SOBOLEV_CRITICAL):
        raise RegimeError(f"p={p!r} must lie in (2, 6]")
    if not (2.0 < q < SOBOLEV_CRITICAL):
        raise RegimeError(f"q={q!r} must lie in (2, 6)")
    if not q < p:
        raise RegimeError(f"need q < p, got q={q!r}, p={p!r}")
    if not p > L2_CRITICAL + GUARD:
        raise RegimeError(f"p={p!r} must exceed the L2-critical exponent 14/3")
    if mu < 0:
        raise RegimeError(f"mu={mu!r} must be nonnegative")
    if mu == 0:
        return Regime.MU_ZERO
    crit = is_critical(p)
    if q < L2_SUBCRITICAL_EDGE - GUARD:
        return Regime.MIXED_CRITICAL if crit else Regime.MIXED
    if q > L2_CRITICAL + GUARD:
        return Regime.SUPERCRITICAL_CRITICAL if crit else Regime.SUPERCRITICAL
    raise RegimeError(
        f"q={q!r} lies in [10/3, 14/3]; no fiber-map structure is available there"
    )


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of E_mu(u) = a/2|grad u|^2 + b/4|grad u|^4 - |u|_p^p/p - mu|u|_q^q/q on S_c."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    mu: float = 0.0
    p: float = 5.0
    q: float = 3.0
    regime: Regime = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        # a = 0 or b = 0 is accepted for closed-form constants and the b = 0 reduction;
        # the landscape-based solvers require both positive
        for name in ("a", "b"):
            if not getattr(self, name) >= 0:
                raise RegimeError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if not self.a + self.b > 0:
            raise RegimeError("a and b cannot both vanish")
        if not self.c > 0:
            raise RegimeError(f"c must be positive, got {self.c!r}")
        inferred = infer_regime(self.p, self.q, self.mu)
        if self.regime is None:
            object.__setattr__(self, "regime", inferred)
        else:
            given = Regime(self.regime)
            if given is not inferred:
                raise RegimeError(
                    f"regime {given.value} contradicts exponents (inferred {inferred.value})"
                )
            object.__setattr__(self, "regime", given)

    @property
    def delta_p(self) -> float:
        return delta_exponent(self.p)

    @property
    def delta_q(self) -> float:
        return delta_exponent(self.q)

    @property
    def p_tilde(self) -> float:
        return self.p * self.delta_p

    @property
    def q_tilde(self) -> float:
        return self.q * self.delta_q

    def require_kirchhoff(self) -> None:
        """Raise unless a > 0 and b > 0, which the fiber-map analysis assumes."""
        if not (self.a > 0 and self.b > 0):
            raise RegimeError(f"this operation needs a > 0 and b > 0, got a={self.a!r}, b={self.b!r}")

    def with_mu(self, mu: float) -> "ModelParams":
        return ModelParams(a=self.a, b=self.b, c=self.c, mu=mu, p=self.p, q=self.q)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d
