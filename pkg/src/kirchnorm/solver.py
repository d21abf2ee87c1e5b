"""Critical points of E_mu on the mass sphere via the reduced functional.

For a profile v with |v|_2 = c, the fiber Psi_v(s) = E_mu(s * v) has a critical point
s*(v): the local minimum s_v for the branch inside A_{R0}, or the maximum t_v for the
mountain-pass branch.  Both solvers minimize J(v) = Psi_v(s*(v)).  Because
Psi_v'(s*) = 0, the gradient of J is the gradient of E_mu at s* * v pulled back
through the dilation, and every J-value lies on the Pohozaev set by construction.

Iterates are stored undilated; s* is tracked in the fiber coefficients only, so the
enormous scale range between branches never touches the grid.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import solveh_banded

from kirchnorm.constants import ConstantsBundle, thresholds
from kirchnorm.field import (
    RadialField,
    STENCIL_HALF_WIDTH,
    RadialGrid,
    dilate,
    fiber_of,
    grad_norm,
    lp_exponent,
    lp_norm_p,
    normalize_mass,
    pohozaev_relative,
    raw_grad_sq,
    raw_lp_p,
    raw_mass_sq,
)
from kirchnorm.groundstate import instanton
from kirchnorm.landscape import (
    FiberParams,
    LandscapeKind,
    LandscapeReport,
    barrier,
    classify,
    eval_fiber,
    eval_fiber_second_derivative,
)
from kirchnorm.model import ModelParams, RegimeError, is_critical
from kirchnorm.residuals import least_squares_multiplier, multiplier_estimate
from kirchnorm.results import Branch, SolveResult, SweepRow


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, result: Optional[SolveResult] = None):
        super().__init__(msg)
        self.result = result


class EscapeError(RuntimeError):
    """A local-branch iterate reached the edge of A_{R0}."""


class LandscapeError(RuntimeError):
    """The fiber of an iterate does not have the structure the branch needs."""


# r_min, r_max, n for Sobolev-critical solves
CRITICAL_GRID = (1e-8, 1e6, 8192)


@dataclass(frozen=True)
class SolverConfig:
    """Stopping and step controls.

    ``tol`` bounds the preconditioned tangent-gradient norm relative to the energy scale
    (sum of absolute fiber terms); ``pohozaev_tol`` bounds |P| relative to its positive part.
    ``grid`` of None picks the default grid, or ``CRITICAL_GRID`` at p = 6, where the
    bubble core and the slowly decaying tail are many decades apart.
    """

    tol: float = 1e-7
    pohozaev_tol: float = 1e-6
    max_iter: int = 100_000
    step0: float = 0.1
    step_max: float = 1.0
    step_growth: float = 1.5
    min_step: float = 1e-10
    escape_fraction: float = 0.01
    memory: int = 10
    recenter_every: int = 50
    grid: Optional[RadialGrid] = None

    def grid_for(self, model: ModelParams) -> RadialGrid:
        if self.grid is not None:
            return self.grid
        return RadialGrid.cached(*CRITICAL_GRID) if is_critical(model.p) else RadialGrid.cached()


# ---------------------------------------------------------------------------
# reduced functional


@dataclass(frozen=True)
class _State:
    values: np.ndarray
    s: float
    J: float
    fiber: FiberParams
    report: LandscapeReport
    G: float  # raw |grad v|^2
    scale: float  # sum of absolute fiber terms at s


def _raw_fiber(model: ModelParams, v: np.ndarray, grid: RadialGrid) -> tuple[FiberParams, float]:
    G = raw_grad_sq(v, grid)
    fp = FiberParams(
        a_tilde=0.5 * model.a * G,
        b_tilde=0.25 * model.b * G * G,
        c_tilde=raw_lp_p(v, grid, model.p) / model.p,
        d_tilde=model.mu * raw_lp_p(v, grid, model.q) / model.q if model.mu > 0 else 0.0,
        p_tilde=model.p_tilde,
        q_tilde=model.q_tilde,
    )
    return fp, G


def _critical_point(report: LandscapeReport, branch: Branch) -> Optional[float]:
    if branch is Branch.P_PLUS:
        return report.s_min if report.kind is LandscapeKind.TWO_CRITICAL else None
    if report.kind in (LandscapeKind.TWO_CRITICAL, LandscapeKind.UNIQUE_MAX):
        return report.s_max
    return None


def _state(model: ModelParams, v: np.ndarray, grid: RadialGrid, branch: Branch) -> Optional[_State]:
    fp, G = _raw_fiber(model, v, grid)
    rep = classify(fp)
    s = _critical_point(rep, branch)
    if s is None:
        return None
    scale = (
        fp.a_tilde * math.exp(2 * s)
        + fp.b_tilde * math.exp(4 * s)
        + fp.c_tilde * math.exp(fp.p_tilde * s)
        + fp.d_tilde * math.exp(fp.q_tilde * s)
    )
    return _State(v, s, float(eval_fiber(fp, s)), fp, rep, G, scale)


def _gradient(model: ModelParams, st: _State, grid: RadialGrid) -> tuple[np.ndarray, float]:
    """Gradient of J at v (weak form) and the stiffness e^{2s}(a + b e^{2s} G)."""
    v, s = st.values, st.s
    stiff = math.exp(2 * s) * (model.a + model.b * math.exp(2 * s) * st.G)
    w = grid.weights
    nl = math.exp(lp_exponent(model.p) * s) * np.abs(v) ** (model.p - 2) * v
    if model.mu > 0:
        nl = nl + model.mu * math.exp(lp_exponent(model.q) * s) * np.abs(v) ** (model.q - 2) * v
    return stiff * (grid.stiffness @ v) - w * nl, stiff


def _banded_stiffness(grid: RadialGrid) -> np.ndarray:
    """Upper banded storage of K for solveh_banded."""
    K = grid.stiffness.todia()
    n = grid.n
    ab = np.zeros((_BANDS + 1, n))
    for off, diag in zip(K.offsets, K.data):
        if off >= 0:
            # dia storage aligns column j with data[j]
            ab[_BANDS - off, off:] = diag[off:]
    return ab


_BANDED_CACHE: dict = {}
_BANDS = STENCIL_HALF_WIDTH


def _precondition(grid: RadialGrid, stiff: float, shift: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (stiff K + shift M) z = rhs with z pinned to zero at r_max."""
    key = id(grid)
    if key not in _BANDED_CACHE:
        _BANDED_CACHE[key] = (grid, _banded_stiffness(grid))
    ab = stiff * _BANDED_CACHE[key][1]
    ab[_BANDS] = ab[_BANDS] + shift * grid.weights
    ab[:_BANDS, -1] = 0.0
    ab[_BANDS, -1] = 1.0
    rhs = np.array(rhs, dtype=float)
    rhs[-1] = 0.0
    return solveh_banded(ab, rhs, check_finite=False)


# ---------------------------------------------------------------------------
# public operations


def project_to_pohozaev(model: ModelParams, u: RadialField, branch: Branch) -> float:
    """s with s * u on the requested branch of the Pohozaev set.

    Raises
    ------
    RegimeError
        PPlus requested where the Pohozaev set has no such branch.
    LandscapeError
        The fiber of u is not classifiable into the needed shape.
    """
    branch = Branch(branch)
    if branch is Branch.P_PLUS and not model.regime.is_mixed:
        raise RegimeError(f"the PPlus branch is empty in the {model.regime.value} regime")
    rep = classify(fiber_of(model, u))
    s = _critical_point(rep, branch)
    if s is None:
        raise LandscapeError(f"fiber is {rep.kind.value}; no {branch.value} point")
    return s


def gaussian_initial(model: ModelParams, grid: RadialGrid) -> RadialField:
    return normalize_mass(RadialField.from_function(grid, lambda r: np.exp(-r * r)), model.c)


def initial_shapes(model: ModelParams, grid: RadialGrid) -> list[RadialField]:
    """Three radially decreasing starts of different tail type."""
    shapes = [
        lambda r: np.exp(-r * r),
        lambda r: 2.0 * np.exp(-r) / (1.0 + np.exp(-2.0 * r)),
        lambda r: (1.0 + r * r) ** -2.0,
    ]
    return [normalize_mass(RadialField.from_function(grid, f), model.c) for f in shapes]


def bubble_initial(model: ModelParams, grid: RadialGrid, eps: float = 0.05) -> RadialField:
    """Truncated instanton rescaled to mass c."""
    return instanton(eps, model.c, grid).v_norm


def _check_local_thresholds(model: ModelParams, constants: ConstantsBundle) -> None:
    if not model.regime.is_mixed:
        raise RegimeError(f"local minimization needs the mixed regime, got {model.regime.value}")
    bound = constants.mu_local_bound
    if bound is None or not model.mu < bound:
        raise RegimeError(f"local minimization needs mu < {bound} (min of the thresholds), got {model.mu}")


def _recenter(values: np.ndarray, grid: RadialGrid, tail_floor: float = 1e-9, margin: float = math.log(10.0)) -> Optional[np.ndarray]:
    """Shift the stored profile by whole nodes, an exact discrete dilation, to keep it on the grid.

    A shift is triggered when the tail (down to ``tail_floor`` of the peak) comes within
    one ``margin`` of r_max, or the half-peak radius within two of r_min, and then moves
    the profile one further margin so that shifts stay rare.  Returns None when no shift
    is needed or both ends are crowded.  Vacated nodes take the edge value at r_min and
    zero at r_max.
    """
    a = np.abs(values)
    peak = a.max()
    n, h = grid.n, grid.h
    tail = int(np.nonzero(a > tail_floor * peak)[0][-1])
    below = np.nonzero(a < 0.5 * peak)[0]
    core = int(below[0]) if below.size else n
    k = int(math.ceil(margin / h))
    slack_core = core - 2 * k
    slack_tail = (n - 1 - k) - tail
    if slack_tail < 0 < slack_core:
        m = min(k - slack_tail, slack_core)
    elif slack_core < 0 < slack_tail:
        m = -min(k - slack_core, slack_tail)
    else:
        return None
    out = np.empty(n)
    if m > 0:
        out[: n - m] = values[m:]
        out[n - m :] = 0.0
    else:
        out[-m:] = values[: n + m]
        out[:-m] = values[0]
        out[-1] = 0.0
    return out * math.exp(1.5 * m * h)


def _descend(
    model: ModelParams,
    u_init: RadialField,
    branch: Branch,
    cfg: SolverConfig,
    escape_radius: Optional[float] = None,
) -> SolveResult:
    """Limited-memory BFGS on the sphere, with the shifted stiffness as the base metric.

    Directions are kept M-orthogonal to the iterate; the step is retracted by rescaling
    to mass c.  The value at r_max is held at zero: with a free end the discrete Dirichlet
    energy vanishes on constants, and descent can spread the mass over the whole grid.  A step is accepted once it passes an Armijo test, allowing for rounding
    in J; without curvature pairs the step length starts at ``cfg.step0``.
    """
    grid = u_init.grid
    # J is dilation invariant, so the stored scale of the start is dropped
    v0 = np.array(u_init.values, dtype=float)
    v0[-1] = 0.0
    st = _state(model, v0 * (model.c / math.sqrt(raw_mass_sq(v0, grid))), grid, branch)
    if st is None:
        raise LandscapeError(f"initial profile has no {branch.value} point on its fiber")
    c2 = model.c**2
    w = grid.weights
    sd_step = cfg.step0
    shift = None
    rho = math.inf
    it = 0
    history = [st.J]
    memory: deque = deque(maxlen=cfg.memory)
    prev: Optional[tuple[np.ndarray, np.ndarray]] = None
    noise = 16 * np.finfo(float).eps
    stalled = False
    for it in range(1, cfg.max_iter + 1):
        if it % cfg.recenter_every == 0:
            moved = _recenter(st.values, grid)
            if moved is not None:
                fresh = _state(model, moved * (model.c / math.sqrt(raw_mass_sq(moved, grid))), grid, branch)
                if fresh is not None:
                    st, prev = fresh, None
                    memory.clear()
        g, stiff = _gradient(model, st, grid)
        g[-1] = 0.0
        mv = w * st.values
        lam = float(np.dot(st.values, g)) / c2
        if shift is None or lam < 0:
            shift = max(-lam, 1e-3 * stiff)
        pm = _precondition(grid, stiff, shift, mv)
        mpm = float(np.dot(mv, pm))

        def metric(q):
            pq = _precondition(grid, stiff, shift, q)
            return pq - (float(np.dot(mv, pq)) / mpm) * pm

        pg = _precondition(grid, stiff, shift, g)
        lam_p = float(np.dot(mv, pg)) / mpm
        z = pg - lam_p * pm
        r = g - lam_p * mv
        rho = math.sqrt(max(float(np.dot(r, z)), 0.0) / st.scale)
        if rho <= cfg.tol:
            break

        if prev is not None:
            s_k = st.values - prev[0]
            y_k = r - prev[1]
            sy = float(np.dot(s_k, y_k))
            if sy > 0:
                memory.append((s_k, y_k, 1.0 / sy))
        prev = (st.values, r)

        q = r.copy()
        alphas = []
        for s_k, y_k, rho_k in reversed(memory):
            a_k = rho_k * float(np.dot(s_k, q))
            alphas.append(a_k)
            q -= a_k * y_k
        d = metric(q)
        for (s_k, y_k, rho_k), a_k in zip(memory, reversed(alphas)):
            b_k = rho_k * float(np.dot(y_k, d))
            d += (a_k - b_k) * s_k
        d = -(d - (float(np.dot(mv, d)) / float(np.dot(mv, st.values))) * st.values)
        slope = float(np.dot(r, d))
        if not memory or slope >= 0:
            d, slope = -z, -float(np.dot(r, z))
            memory.clear()
            step = sd_step
        else:
            step = 1.0

        accepted = False
        while step >= cfg.min_step:
            trial = st.values + step * d
            trial = trial * (model.c / math.sqrt(raw_mass_sq(trial, grid)))
            new = _state(model, trial, grid, branch)
            if new is not None and new.J <= st.J + 1e-4 * step * slope + noise * st.scale:
                if escape_radius is not None:
                    gn = math.exp(new.s) * math.sqrt(new.G)
                    if gn >= escape_radius * (1.0 - cfg.escape_fraction):
                        raise EscapeError(
                            f"iterate reached |grad u| = {gn:.6g} >= R0 - R0/100 with R0 = {escape_radius:.6g}"
                        )
                accepted = True
                if not memory:
                    sd_step = min(step * cfg.step_growth, cfg.step_max)
                st = new
                break
            step *= 0.5
        if not accepted:
            if memory:
                memory.clear()
                prev = None
                continue
            stalled = True
            break
        history.append(st.J)

    u = dilate(RadialField(grid, st.values), st.s)
    poh = pohozaev_relative(model, u)
    lam_cf = multiplier_estimate(model, u)
    converged = rho <= cfg.tol and poh <= cfg.pohozaev_tol
    if converged:
        message = ""
    elif stalled:
        message = f"line search failed with gradient residual {rho:.3e}"
    else:
        message = f"iteration limit {cfg.max_iter} reached with gradient residual {rho:.3e}"
    result = SolveResult(
        field=u,
        lam=lam_cf,
        energy=st.J,
        pohozaev_residual=poh,
        grad_residual=rho,
        branch=branch,
        iterations=it,
        converged=converged,
        fiber_curvature=float(eval_fiber_second_derivative(st.fiber, st.s)),
        lambda_least_squares=least_squares_multiplier(model, u),
        message=message,
        history=tuple(history),
    )
    if not converged:
        raise ConvergenceError(result.message, result)
    return result


def local_minimize(
    model: ModelParams,
    u_init: Optional[RadialField] = None,
    cfg: SolverConfig = SolverConfig(),
    constants: Optional[ConstantsBundle] = None,
) -> SolveResult:
    """Minimize E_mu over the PPlus branch, which lies inside A_{R0}.

    Raises
    ------
    RegimeError
        Outside the mixed regime or with mu above min{mu_*, mu^*} (and mu^** at p = 6).
    EscapeError
        If an accepted iterate reaches |grad u| >= R0 - R0/100.
    ConvergenceError
        If the stopping test is not met; the last iterate is attached.
    """
    model.require_kirchhoff()
    constants = constants or thresholds(model)
    _check_local_thresholds(model, constants)
    R0 = barrier(model, constants).R0
    u0 = u_init if u_init is not None else gaussian_initial(model, cfg.grid_for(model))
    return _descend(model, u0, Branch.P_PLUS, cfg, escape_radius=R0)


def mountain_pass(
    model: ModelParams,
    u_init: Optional[RadialField] = None,
    cfg: SolverConfig = SolverConfig(),
    starts: Optional[Sequence[RadialField]] = None,
) -> SolveResult:
    """Minimize u -> max_s E_mu(s * u) over the sphere; returns the lowest converged start.

    With no ``u_init`` or ``starts``, three shapes are tried (Gaussian, sech, algebraic);
    at p = 6 the truncated instanton is used instead.
    """
    model.require_kirchhoff()
    if model.regime.is_mixed and is_critical(model.p):
        raise RegimeError("the mountain-pass branch is not computed for 2 < q < 10/3 with p = 6")
    if starts is None:
        if u_init is not None:
            starts = [u_init]
        elif is_critical(model.p):
            starts = [bubble_initial(model, cfg.grid_for(model))]
        else:
            starts = initial_shapes(model, cfg.grid_for(model))
    best: Optional[SolveResult] = None
    failures = []
    for start in starts:
        try:
            res = _descend(model, start, Branch.P_MINUS, cfg)
        except (ConvergenceError, LandscapeError) as exc:
            failures.append(str(exc))
            continue
        if best is None or res.energy < best.energy:
            best = res
    if best is None:
        raise ConvergenceError("no start converged: " + "; ".join(failures))
    return best


# ---------------------------------------------------------------------------
# sweeps


def mu_sweep(
    template: ModelParams,
    mu_values: Iterable[float],
    branch: str = "mp",
    cfg: SolverConfig = SolverConfig(),
    warm_start: bool = True,
) -> list[SweepRow]:
    """One row per mu (in decreasing order), warm-starting each solve from the last.

    ``branch`` is "local", "mp" or "both".  A failed solve is recorded in the row's
    ``error`` column and the sweep continues.
    """
    mus = [float(m) for m in mu_values]
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu values must be strictly decreasing")
    if branch not in ("local", "mp", "both"):
        raise ValueError(f"unknown branch {branch!r}")
    constants = thresholds(template)
    rows = []
    prev_local: Optional[RadialField] = None
    prev_mp: Optional[RadialField] = None
    for mu in mus:
        model = template.with_mu(mu)
        vals: dict = {"mu": mu}
        errors = []
        if branch in ("local", "both"):
            try:
                res = local_minimize(model, prev_local if warm_start else None, cfg, constants)
                vals.update(m_local=res.energy, grad_norm_local=grad_norm(res.field), lambda_local=res.lam)
                prev_local = res.field
            except Exception as exc:  # recorded per row by design
                errors.append(f"local: {type(exc).__name__}: {exc}")
        if branch in ("mp", "both"):
            try:
                start = [prev_mp] if (warm_start and prev_mp is not None) else None
                res = mountain_pass(model, cfg=cfg, starts=start)
                vals.update(sigma_mp=res.energy, lambda_mp=res.lam)
                if is_critical(model.p):
                    vals.update(l6_norm6=lp_norm_p(res.field, 6.0))
                prev_mp = res.field
            except Exception as exc:
                errors.append(f"mp: {type(exc).__name__}: {exc}")
        rows.append(SweepRow(**vals, error="; ".join(errors)))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(SweepRow.columns())
    for row in rows:
        writer.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row.as_row()])
    return buf.getvalue()

