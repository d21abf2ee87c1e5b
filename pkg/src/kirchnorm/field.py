"""Radial functions on R^3 sampled on a log-uniform grid.

Integrals are computed in x = log r, where 4 pi r^2 dr = 4 pi r^3 dx.  For fields that
are flat near the origin and decay at the outer end, the trapezoid rule in x converges
faster than any power of the spacing, which matters for the slowly decaying instanton.

A field carries a dilation scale s (``dilation_log``) and represents e^{3s/2} u(e^s r).
Norms of the dilated function follow from exact scaling laws, so mass invariance and
the fiber-map identities hold to rounding error with no resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import PchipInterpolator

from kirchnorm.landscape import FiberParams
from kirchnorm.model import ModelParams

MIN_NODES = 512
DEFAULT_R_MIN = 1e-5
DEFAULT_R_MAX = 1e3
DEFAULT_NODES = 4096
STENCIL_HALF_WIDTH = 3
# weights of the 1-, 2- and 3-step energies; they cancel the h^2 and h^4 error terms
RICHARDSON_WEIGHTS = (1.5, -0.6, 0.1)


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the order-th derivative (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


@dataclass(frozen=True)
class RadialGrid:
    """Log-uniform radii r_min = r_1 < ... < r_N = r_max."""

    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    n: int = DEFAULT_NODES

    def __post_init__(self):
        if not (self.r_min > 0 and self.r_max > 0):
            raise ValueError("grid radii must be positive")
        if self.n < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not self.r_min <= 1e-4 * self.r_max:
            raise ValueError("grid must span at least four decades (r_min <= 1e-4 r_max)")

    @classmethod
    @lru_cache(maxsize=16)
    def cached(cls, r_min: float = DEFAULT_R_MIN, r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_NODES) -> "RadialGrid":
        """Shared instance so that operator caches are reused."""
        return cls(r_min, r_max, n)

    @cached_property
    def h(self) -> float:
        return math.log(self.r_max / self.r_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(math.log(self.r_min), math.log(self.r_max), self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def nodes(self) -> np.ndarray:
        r = np.exp(self.x)
        r.setflags(write=False)
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for the integral of f(|x|) over R^3."""
        w = 4.0 * math.pi * self.nodes**3 * self.h
        w[0] *= 0.5
        w[-1] *= 0.5
        w.setflags(write=False)
        return w

    @cached_property
    def difference_weights(self) -> tuple[np.ndarray, ...]:
        """Weights of the squared k-step differences (k = 1, 2, 3) in the Dirichlet energy.

        Each k-step quotient is taken at the geometric midpoint of its two nodes.
        """
        h = self.h
        x = self.x
        out = []
        for k in range(1, STENCIL_HALF_WIDTH + 1):
            mid = np.exp(0.5 * (x[:-k] + x[k:]))
            out.append(4.0 * math.pi * mid / (k * k * h))
        return tuple(out)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric positive semidefinite K with u^T K u approximating the Dirichlet energy.

        Staggered difference quotients with spacing h, 2h and 3h are combined by
        Richardson extrapolation, giving a sixth-order form with bandwidth 3.  The
        combined Fourier symbol is nonnegative, and constants are the only null vectors.
        """
        n = self.n
        K = sp.csr_matrix((n, n))
        for k, (wk, ck) in enumerate(zip(RICHARDSON_WEIGHTS, self.difference_weights), 1):
            dk = sp.diags([-np.ones(n - k), np.ones(n - k)], [0, k], shape=(n - k, n))
            K = K + wk * (dk.T @ sp.diags(ck) @ dk)
        return K.tocsr()

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Radial Laplacian (u_xx + u_x)/r^2 with seven-point sixth-order stencils.

        Built independently of ``stiffness`` so that strong-form residuals give a
        separate check on fields produced by the weak-form solver.
        """
        n, h = self.n, self.h
        width = 2 * STENCIL_HALF_WIDTH + 1
        rows, cols, vals = [], [], []
        for i in range(n):
            lo = min(max(i - STENCIL_HALF_WIDTH, 0), n - width)
            offs = np.arange(lo, lo + width) - i
            wts = fd_weights(offs, 2) / h**2 + fd_weights(offs, 1) / h
            rows.extend([i] * width)
            cols.extend(i + offs)
            vals.extend(wts / self.nodes[i] ** 2)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def _laplacian_rows(self) -> tuple[np.ndarray, np.ndarray]:
        lap = self.laplacian
        width = 2 * STENCIL_HALF_WIDTH + 1
        return lap.data.reshape(self.n, width), lap.indices.reshape(self.n, width)

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        """``laplacian @ values`` formed from the differences u_j - u_i.

        Stencil rows sum to zero, so this is the same operator; neighbouring samples
        differ little, the differences are nearly exact, and the roundoff drops from
        eps/h^2 to about eps/h relative.
        """
        data, idx = self._laplacian_rows
        values = np.asarray(values, dtype=float)
        return np.sum(data * (values[idx] - values[:, None]), axis=1)

    def to_dict(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "n": self.n}


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples u(r_i) plus a dilation scale s; represents e^{3s/2} u(e^s r)."""

    grid: RadialGrid
    values: np.ndarray
    dilation_log: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"values have shape {v.shape}, grid has {self.grid.n} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dilation_log", float(self.dilation_log))

    @classmethod
    def from_function(cls, grid: RadialGrid, f: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        return cls(grid, f(np.asarray(grid.nodes)))

    @property
    def radii(self) -> np.ndarray:
        """Physical radii of the stored samples."""
        return self.grid.nodes * math.exp(-self.dilation_log)

    @property
    def physical_values(self) -> np.ndarray:
        return self.values * math.exp(1.5 * self.dilation_log)

    def __call__(self, r) -> np.ndarray:
        """Pointwise values of the represented function (monotone cubic in log r)."""
        r = np.asarray(r, dtype=float)
        # flat stretches in an underflowed tail give 0/0 slope ratios that pchip resolves to 0
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            interp = PchipInterpolator(np.log(self.radii), self.physical_values, extrapolate=False)
        lr = np.log(np.clip(r, self.radii[0], None))
        out = interp(lr)
        return np.where(np.isnan(out), 0.0, out)

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values, self.dilation_log)

    def decay_ratio(self) -> float:
        """|u(r_max)| / max|u|, a check that the grid holds the field."""
        peak = np.max(np.abs(self.values))
        return float(abs(self.values[-1]) / peak) if peak > 0 else 0.0


# ---------------------------------------------------------------------------
# norms; the raw_* versions ignore the dilation


def raw_mass_sq(values: np.ndarray, grid: RadialGrid) -> float:
    return float(np.dot(grid.weights, values * values))


def raw_grad_sq(values: np.ndarray, grid: RadialGrid) -> float:
    """values^T K values, summed over squared differences to avoid cancellation in K @ values."""
    total = 0.0
    for k, (wk, ck) in enumerate(zip(RICHARDSON_WEIGHTS, grid.difference_weights), 1):
        dk = values[k:] - values[:-k]
        total += wk * float(np.dot(ck, dk * dk))
    return total


def raw_lp_p(values: np.ndarray, grid: RadialGrid, p: float) -> float:
    return float(np.dot(grid.weights, np.abs(values) ** p))


def lp_exponent(p: float) -> float:
    """Scaling exponent of |u|_p^p under the mass-preserving dilation: 3(p-2)/2."""
    return 1.5 * (p - 2.0)


def mass_norm(u: RadialField) -> float:
    """|u|_2, unchanged by dilation."""
    return math.sqrt(raw_mass_sq(u.values, u.grid))


def grad_norm_sq(u: RadialField) -> float:
    return math.exp(2.0 * u.dilation_log) * raw_grad_sq(u.values, u.grid)


def grad_norm(u: RadialField) -> float:
    """|grad u|_2."""
    return math.sqrt(grad_norm_sq(u))


def lp_norm_p(u: RadialField, p: float) -> float:
    """|u|_p^p."""
    return math.exp(lp_exponent(p) * u.dilation_log) * raw_lp_p(u.values, u.grid, p)


def lp_norm(u: RadialField, p: float) -> float:
    """|u|_p."""
    return lp_norm_p(u, p) ** (1.0 / p)


# ---------------------------------------------------------------------------
# group action and functionals


def dilate(u: RadialField, s: float) -> RadialField:
    """s * u = e^{3s/2} u(e^s .), recorded by adding s to the stored scale."""
    return RadialField(u.grid, u.values, u.dilation_log + s)


def fiber_of(model: ModelParams, u: RadialField) -> FiberParams:
    g = grad_norm_sq(u)
    return FiberParams(
        a_tilde=0.5 * model.a * g,
        b_tilde=0.25 * model.b * g * g,
        c_tilde=lp_norm_p(u, model.p) / model.p,
        d_tilde=model.mu * lp_norm_p(u, model.q) / model.q if model.mu > 0 else 0.0,
        p_tilde=model.p_tilde,
        q_tilde=model.q_tilde,
    )


def energy(model: ModelParams, u: RadialField) -> float:
    """E_mu(u) = a/2 |grad u|^2 + b/4 |grad u|^4 - |u|_p^p/p - mu |u|_q^q/q."""
    g = grad_norm_sq(u)
    val = 0.5 * model.a * g + 0.25 * model.b * g * g - lp_norm_p(u, model.p) / model.p
    if model.mu > 0:
        val -= model.mu * lp_norm_p(u, model.q) / model.q
    return val


def pohozaev(model: ModelParams, u: RadialField) -> float:
    """P_mu(u) = a|grad u|^2 + b|grad u|^4 - mu delta_q |u|_q^q - delta_p |u|_p^p."""
    g = grad_norm_sq(u)
    val = model.a * g + model.b * g * g - model.delta_p * lp_norm_p(u, model.p)
    if model.mu > 0:
        val -= model.mu * model.delta_q * lp_norm_p(u, model.q)
    return val


def pohozaev_relative(model: ModelParams, u: RadialField) -> float:
    """|P_mu(u)| / (a|grad u|^2 + b|grad u|^4), the size of P against its positive part."""
    g = grad_norm_sq(u)
    return abs(pohozaev(model, u)) / (model.a * g + model.b * g * g)


def normalize_mass(u: RadialField, c: float) -> RadialField:
    m = mass_norm(u)
    if m == 0:
        raise ValueError("cannot normalize the zero field")
    return u.with_values(u.values * (c / m))


def resample(u: RadialField, grid: RadialGrid) -> RadialField:
    """Represented function sampled on another grid with zero dilation.

    Left of the source grid the value is held constant, right of it the field is zero.
    """
    src_r = u.radii
    vals = u(np.clip(grid.nodes, src_r[0], None))
    vals = np.where(grid.nodes > src_r[-1], 0.0, vals)
    return RadialField(grid, vals, 0.0)


# ---------------------------------------------------------------------------
# two-column text dumps


def dump_field(u: RadialField, path: Union[str, Path]) -> None:
    """Write physical (radius, value) pairs at full double precision."""
    data = np.column_stack([u.radii, u.physical_values])
    np.savetxt(path, data, fmt="%.17e")


def load_field(path: Union[str, Path]) -> RadialField:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    r, v = data[:, 0], data[:, 1]
    grid = RadialGrid(float(r[0]), float(r[-1]), len(r))
    if not np.allclose(grid.nodes, r, rtol=1e-10, atol=0):
        raise ValueError(f"{path}: radii are not log-uniform")
    return RadialField(grid, v, 0.0)
