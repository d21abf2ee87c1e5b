"""Acceptance criteria 1-11, one marker per criterion.

The terminal summary prints one PASS/FAIL line per criterion number.
"""

import math
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from kirchnorm.cli import eps_grid, instanton_table
from kirchnorm.constants import SobolevQuadrature, gn_constant, instanton_quotient, sobolev_constant, thresholds
from kirchnorm.field import (
    RadialGrid,
    dilate,
    energy,
    fiber_of,
    grad_norm,
    grad_norm_sq,
    lp_norm,
    lp_norm_p,
    mass_norm,
    pohozaev,
)
from kirchnorm.groundstate import instanton, solve_limit_ground_state, solve_wp
from kirchnorm.landscape import LandscapeKind, barrier, classify, eval_fiber_derivative, sufficient_ratio
from kirchnorm.model import ModelParams, delta_exponent
from kirchnorm.residuals import least_squares_multiplier, multiplier_estimate, pde_residual
from kirchnorm.results import Branch
from kirchnorm.solver import local_minimize, mountain_pass

from fields import random_field
from landscape_oracle import brute_force_critical_count, random_mixed_satisfying, random_supercritical

criterion = pytest.mark.criterion
GRID = RadialGrid.cached()

# every converged solve made below, collected for the multiplier check
SOLVES: dict = {}


def _record(label, model, res):
    if res.converged:
        SOLVES[label] = (model, res)
    return res


# ---------------------------------------------------------------------------
# 1


@criterion(1, "exponent identities")
def test_exponent_identities():
    assert delta_exponent(6) == 1.0
    assert delta_exponent(Fraction(6)) == 1
    for q in (Fraction(3), Fraction(10, 3)):
        d = delta_exponent(q)
        assert isinstance(d, Fraction)
    assert Fraction(3) * delta_exponent(Fraction(3)) - 2 == Fraction(-1, 2)
    assert Fraction(10, 3) * delta_exponent(Fraction(10, 3)) - 2 == 0
    assert Fraction(14, 3) * delta_exponent(Fraction(14, 3)) - 4 == 0
    assert Fraction(5) * delta_exponent(Fraction(5)) - 4 == Fraction(1, 2)
    assert Fraction(6) * delta_exponent(Fraction(6)) - 4 == 2
    # sign changes exactly at the two edges
    edge_q, edge_p = Fraction(10, 3), Fraction(14, 3)
    tiny = Fraction(1, 10**12)
    assert (edge_q - tiny) * delta_exponent(edge_q - tiny) < 2 < (edge_q + tiny) * delta_exponent(edge_q + tiny)
    assert (edge_p - tiny) * delta_exponent(edge_p - tiny) < 4 < (edge_p + tiny) * delta_exponent(edge_p + tiny)
    for x in (3, 10 / 3, 14 / 3, 5, 6):
        assert delta_exponent(x) == pytest.approx(float(delta_exponent(Fraction(x).limit_denominator(3))), rel=1e-15)


# ---------------------------------------------------------------------------
# 2


@criterion(2, "Sobolev constant from the instanton")
def test_sobolev_constant():
    grid = SobolevQuadrature().grid
    S = sobolev_constant()
    for eps in (0.25, 0.5, 1.0, 2.0, 4.0):
        assert instanton_quotient(eps, grid) == pytest.approx(S, rel=1e-6)
        U = instanton(eps, grid=grid).U
        assert grad_norm_sq(U) == pytest.approx(S**1.5, rel=1e-6)
        assert lp_norm_p(U, 6.0) == pytest.approx(S**1.5, rel=1e-6)


# ---------------------------------------------------------------------------
# 3


@pytest.fixture(scope="module")
def cutoff_slopes():
    rows, slopes = instanton_table(eps_grid("0.05:0.4:8"))
    print("cutoff slopes", slopes)
    return slopes


@criterion(3, "cutoff asymptotics")
def test_cutoff_mass_slope(cutoff_slopes):
    assert cutoff_slopes["mass_sq"] == pytest.approx(1.0, abs=0.1)


@criterion(3, "cutoff asymptotics")
def test_cutoff_l5_slope(cutoff_slopes):
    assert cutoff_slopes["l5_5"] == pytest.approx(0.5, abs=0.1)


@criterion(3, "cutoff asymptotics")
def test_cutoff_l6_gap_slope(cutoff_slopes):
    assert cutoff_slopes["l6_gap"] == pytest.approx(3.0, abs=0.3)


@criterion(3, "cutoff asymptotics")
def test_cutoff_grad_gap_slope(cutoff_slopes):
    assert cutoff_slopes["grad_gap"] == pytest.approx(1.0, abs=0.2)


# ---------------------------------------------------------------------------
# 4


@criterion(4, "landscape classification")
def test_landscape_mixed():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        fp = random_mixed_satisfying(rng)
        assert sufficient_ratio(fp) > 1.0
        rep = classify(fp)
        assert rep.kind is LandscapeKind.TWO_CRITICAL
        assert rep.s_min < rep.zero_lo < rep.s_max < rep.zero_hi
        assert rep.value_at_min < 0 < rep.value_at_max
        mismatches += brute_force_critical_count(fp) != rep.n_critical
    assert mismatches == 0


@criterion(4, "landscape classification")
def test_landscape_supercritical():
    rng = np.random.default_rng(2025)
    mismatches = 0
    for _ in range(100):
        fp = random_supercritical(rng)
        rep = classify(fp)
        assert rep.kind is LandscapeKind.UNIQUE_MAX
        assert rep.value_at_max > 0
        mismatches += brute_force_critical_count(fp) != rep.n_critical
    assert mismatches == 0


# ---------------------------------------------------------------------------
# 5


def _term_scale(fp, s):
    """Sum of the magnitudes of the four terms of the fiber derivative."""
    return (
        2 * fp.a_tilde * math.exp(2 * s)
        + 4 * fp.b_tilde * math.exp(4 * s)
        + fp.p_tilde * fp.c_tilde * math.exp(fp.p_tilde * s)
        + fp.q_tilde * fp.d_tilde * math.exp(fp.q_tilde * s)
    )


@criterion(5, "fiber consistency")
def test_fiber_consistency():
    rng = np.random.default_rng(5)
    h = 1e-3
    for _ in range(100):
        p = rng.uniform(4.7, 6.0)
        q = rng.uniform(2.1, 3.3)
        model = ModelParams(*10.0 ** rng.uniform(-1, 1, size=3), 10.0 ** rng.uniform(-1, 1), p, q)
        u = random_field(rng, GRID, model.c)
        fp = fiber_of(model, u)
        s = rng.uniform(-1.0, 1.0)
        e = [energy(model, dilate(u, s + k * h)) for k in (-2, -1, 1, 2)]
        fd = (e[0] - 8 * e[1] + 8 * e[2] - e[3]) / (12 * h)
        assert abs(fd - eval_fiber_derivative(fp, s)) <= 1e-6 * _term_scale(fp, s)
        P = pohozaev(model, u)
        assert abs(eval_fiber_derivative(fp, 0.0) - P) <= 1e-10 * _term_scale(fp, 0.0)


# ---------------------------------------------------------------------------
# 6


@criterion(6, "Gagliardo-Nirenberg tightness")
@pytest.mark.parametrize("p", [3.0, 4.0, 5.0])
def test_gn_tightness(p):
    C = gn_constant(p)
    d = delta_exponent(p)
    w = solve_wp(p)
    ratio = lp_norm(w, p) / (C * grad_norm(w) ** d * mass_norm(w) ** (1 - d))
    assert ratio == pytest.approx(1.0, abs=1e-3)
    rng = np.random.default_rng(int(p))
    worst = 0.0
    for _ in range(1000):
        u = random_field(rng, GRID, rng.uniform(0.5, 2.0))
        worst = max(worst, lp_norm(u, p) / (C * grad_norm(u) ** d * mass_norm(u) ** (1 - d)))
    print(f"p={p} equality ratio {ratio:.8f} worst random ratio {worst:.6f}")
    assert worst <= 1.0


# ---------------------------------------------------------------------------
# 7


LOCAL_MODEL = ModelParams(1, 1, 1, 1.0, 5, 3)


@pytest.fixture(scope="module")
def local_sweep():
    bound = thresholds(LOCAL_MODEL).mu_local_bound
    out = []
    for mu in np.geomspace(0.1 * bound, 0.1 * bound * 1e-3, 11):
        model = LOCAL_MODEL.with_mu(float(mu))
        out.append((model, _record(("local", float(mu)), model, local_minimize(model))))
    return out


@criterion(7, "local minimizer branch")
def test_local_branch(local_sweep):
    model, res = local_sweep[0]
    assert res.converged and res.branch is Branch.P_PLUS
    assert res.energy < 0 and res.lam < 0
    assert grad_norm(res.field) < barrier(model, thresholds(model)).R0
    assert res.pohozaev_residual <= 1e-6
    m = [r.energy for _, r in local_sweep]
    g = [grad_norm(r.field) for _, r in local_sweep]
    print("m(c,mu):", m)
    assert all(r.converged for _, r in local_sweep)
    assert all(b > a for a, b in zip(m, m[1:])) and m[-1] < 0
    assert all(b < a for a, b in zip(g, g[1:]))


# ---------------------------------------------------------------------------
# 8


SUB_MODEL = ModelParams(1, 1, 1, 1.0, 5.5, 5)


@pytest.fixture(scope="module")
def subcritical_runs():
    out = {}
    for mu in (2.0, 1.0, 0.5, 1e-3):
        model = SUB_MODEL.with_mu(mu)
        out[mu] = (model, _record(("mp-sub", mu), model, mountain_pass(model)))
    return out


@criterion(8, "subcritical mountain pass")
def test_subcritical_mountain_pass(subcritical_runs):
    for mu, (model, res) in subcritical_runs.items():
        assert res.converged, res.message
        assert res.energy > 0 and res.lam < 0
        assert res.pohozaev_residual <= 1e-6
    sigma = [subcritical_runs[mu][1].energy for mu in (2.0, 1.0, 0.5)]
    assert sigma[0] <= sigma[1] <= sigma[2]
    e0 = solve_limit_ground_state(SUB_MODEL.with_mu(0.0)).energy
    gap = abs(subcritical_runs[1e-3][1].energy - e0) / e0
    print(f"sigma {sigma}, E0 {e0}, gap at mu=1e-3 {gap:.2e}")
    assert gap <= 0.02


# ---------------------------------------------------------------------------
# 9


CRIT_MODEL = ModelParams(1, 1, 1, 1.0, 6, 5)


@pytest.fixture(scope="module")
def critical_runs():
    out = {}
    for mu in (1.0, 0.1, 0.01, 1e-3):
        model = CRIT_MODEL.with_mu(mu)
        out[mu] = (model, _record(("mp-crit", mu), model, mountain_pass(model)))
    return out


@criterion(9, "Sobolev-critical threshold")
def test_critical_threshold(critical_runs):
    bundle = thresholds(CRIT_MODEL)
    level, ell = bundle.critical_energy, bundle.lambda_big_cubed
    for mu, (model, res) in critical_runs.items():
        if res.converged:
            assert res.energy < level
    model, res = critical_runs[1e-3]
    assert res.converged, res.message
    gap = (level - res.energy) / level
    l6 = lp_norm_p(res.field, 6.0)
    print(f"sigma {res.energy} level {level} gap {gap:.2e}; |u|_6^6 {l6} vs {ell}")
    assert gap <= 0.05
    assert abs(l6 - ell) <= 0.1 * ell
    sigma = [critical_runs[mu][1].energy for mu in (1.0, 0.1, 0.01, 1e-3)]
    assert all(b >= a for a, b in zip(sigma, sigma[1:]))


# ---------------------------------------------------------------------------
# 10


@criterion(10, "multiplier double characterization")
def test_multiplier_agreement(local_sweep, subcritical_runs, critical_runs):
    assert len(SOLVES) >= 15
    worst = 0.0
    for label, (model, res) in SOLVES.items():
        closed = multiplier_estimate(model, res.field)
        ls = least_squares_multiplier(model, res.field)
        rel = abs(closed - ls) / abs(ls)
        worst = max(worst, rel)
        assert rel <= 1e-6, label
    print(f"worst multiplier disagreement {worst:.2e} over {len(SOLVES)} solves")


@criterion(10, "multiplier double characterization")
def test_residual_negative_control(subcritical_runs):
    model, res = subcritical_runs[1.0]
    u = res.field
    rng = np.random.default_rng(10)
    r = np.asarray(u.grid.nodes) * math.exp(-u.dilation_log)
    scale = np.sqrt(np.asarray(grad_norm_sq(u)))
    for _ in range(20):
        center = rng.uniform(0.2, 2.0) / scale
        bump = np.exp(-(((r - center) * scale / 0.3) ** 2))
        w = u.with_values(u.values * (1 + rng.uniform(0.02, 0.1) * bump))
        assert pde_residual(model, w, least_squares_multiplier(model, w)) > 1e-2


# ---------------------------------------------------------------------------
# 11


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "kirchnorm", *args], cwd=cwd, capture_output=True, check=True)


@criterion(11, "determinism")
def test_determinism(tmp_path):
    runs = [
        ["solve-local", "--q", "3", "--p", "5", "--mu", "auto"],
        ["sweep", "--q", "5", "--p", "5.5", "--branch", "mp", "--mu-geom", "1.0,0.5,4"],
        ["instanton-check", "--eps", "0.05:0.4:8"],
    ]
    for k, args in enumerate(runs):
        outputs = []
        for name in ("first", "second"):
            cwd = tmp_path / f"{k}-{name}"
            cwd.mkdir()
            proc = _cli(args + ["--json", "run.json", "--csv", "run.csv"], cwd)
            files = {f.name: f.read_bytes() for f in sorted(cwd.iterdir())}
            outputs.append((proc.stdout, files, _cli(args, cwd).stdout))
        assert outputs[0] == outputs[1]
        assert outputs[0][1]["run.json"] and outputs[0][2]
