import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kirchnorm.constants import sobolev_constant, thresholds
from kirchnorm.field import (
    RadialField,
    RadialGrid,
    dilate,
    dump_field,
    energy,
    fiber_of,
    grad_norm,
    grad_norm_sq,
    load_field,
    lp_norm,
    lp_norm_p,
    mass_norm,
    normalize_mass,
    pohozaev,
    resample,
)
from kirchnorm.groundstate import instanton_profile
from kirchnorm.landscape import barrier, eval_fiber, eval_fiber_derivative
from kirchnorm.model import ModelParams

from fields import random_field

GRID = RadialGrid.cached()
GAUSS_MASS_SQ = (math.pi / 2) ** 1.5
GAUSS_GRAD_SQ = 1.5 * math.pi**1.5 / math.sqrt(2)


def gaussian(grid=GRID):
    return RadialField.from_function(grid, lambda r: np.exp(-r * r))


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(1e-5, 1e3, 100)
    with pytest.raises(ValueError):
        RadialGrid(1e-2, 1.0, 1024)
    g = RadialGrid(1e-5, 1e3, 1024)
    assert np.all(np.diff(g.nodes) > 0)
    assert np.allclose(np.diff(np.log(g.nodes)), g.h)
    assert RadialGrid.cached() is RadialGrid.cached()


def test_gaussian_norms():
    u = gaussian()
    assert mass_norm(u) ** 2 == pytest.approx(GAUSS_MASS_SQ, rel=1e-13)
    assert grad_norm_sq(u) == pytest.approx(GAUSS_GRAD_SQ, rel=1e-12)
    # |e^{-r^2}|_p^p = (pi/p)^{3/2}
    for p in (3.0, 5.0, 6.0):
        assert lp_norm_p(u, p) == pytest.approx((math.pi / p) ** 1.5, rel=1e-13)


def test_norms_converge_at_least_second_order():
    errs = []
    for n in (512, 1024):
        u = gaussian(RadialGrid(1e-5, 1e3, n))
        errs.append(abs(grad_norm_sq(u) / GAUSS_GRAD_SQ - 1))
    assert errs[1] <= errs[0] / 4


def test_instanton_gradient_equals_s_three_halves():
    S = sobolev_constant()
    grid = RadialGrid.cached(1e-6, 1e12, 8192)
    for eps in (0.25, 1.0, 4.0):
        U = RadialField.from_function(grid, lambda r: instanton_profile(eps, r))
        assert grad_norm_sq(U) == pytest.approx(S**1.5, rel=1e-8)
        assert lp_norm_p(U, 6.0) == pytest.approx(S**1.5, rel=1e-8)


@given(st.floats(min_value=-5, max_value=5))
def test_dilation_preserves_mass_and_scales_norms(s):
    u = gaussian()
    v = dilate(u, s)
    assert mass_norm(v) == pytest.approx(mass_norm(u), rel=1e-14)
    assert grad_norm_sq(v) == pytest.approx(math.exp(2 * s) * grad_norm_sq(u), rel=1e-13)
    for p in (3.0, 5.5, 6.0):
        assert lp_norm_p(v, p) == pytest.approx(math.exp(1.5 * (p - 2) * s) * lp_norm_p(u, p), rel=1e-13)


@given(st.floats(min_value=0.1, max_value=10))
def test_normalize_mass_hits_target(c):
    u = normalize_mass(gaussian(), c)
    assert mass_norm(u) == pytest.approx(c, rel=1e-14)


def test_normalize_identities():
    u = normalize_mass(gaussian(), 1.0)
    assert np.array_equal(normalize_mass(u, 1.0).values, u.values)
    two = u.with_values(2 * u.values)
    assert np.allclose(normalize_mass(two, mass_norm(u)).values, u.values, rtol=1e-15)
    with pytest.raises(ValueError):
        normalize_mass(u.with_values(np.zeros(GRID.n)), 1.0)


def test_energy_matches_fiber_at_zero():
    model = ModelParams(1.0, 0.5, 1.0, 0.3, 5.0, 3.0)
    u = normalize_mass(gaussian(), 1.0)
    fp = fiber_of(model, u)
    assert energy(model, u) == pytest.approx(eval_fiber(fp, 0.0), rel=1e-13)
    g, l6 = grad_norm_sq(u), lp_norm_p(u, 6.0)
    m6 = ModelParams(2.0, 3.0, 1.0, 0.0, 6.0, 3.0)
    assert energy(m6, u) == pytest.approx(g + 0.75 * g * g - l6 / 6, rel=1e-13)


@given(st.floats(min_value=-2, max_value=2))
def test_pohozaev_is_fiber_derivative(s):
    model = ModelParams(1.0, 1.0, 1.0, 0.5, 5.0, 3.0)
    u = dilate(normalize_mass(gaussian(), 1.0), s)
    fp = fiber_of(model, u)
    P = pohozaev(model, u)
    assert eval_fiber_derivative(fp, 0.0) == pytest.approx(P, rel=1e-10, abs=1e-10 * (abs(fp.a_tilde) + abs(fp.b_tilde)))
    h = 1e-5
    fd = (energy(model, dilate(u, h)) - energy(model, dilate(u, -h))) / (2 * h)
    assert fd == pytest.approx(P, rel=1e-6, abs=1e-6 * grad_norm_sq(u))


def test_pohozaev_vanishes_on_zero_field():
    model = ModelParams(1.0, 1.0, 1.0, 0.5, 5.0, 3.0)
    z = RadialField(GRID, np.zeros(GRID.n))
    assert pohozaev(model, z) == 0.0
    assert energy(model, z) == 0.0


def test_energy_unbounded_below_along_dilation():
    model = ModelParams(1.0, 1.0, 1.0, 0.5, 5.0, 3.0)
    u = normalize_mass(gaussian(), 1.0)
    vals = [energy(model, dilate(u, s)) for s in (5.0, 10.0, 20.0)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 0


def test_barrier_is_lower_bound_on_random_fields():
    model = ModelParams(1.0, 1.0, 1.0, 1.0, 5.0, 3.0)
    cb = thresholds(model)
    model = model.with_mu(0.1 * cb.mu_local_bound)
    h = barrier(model, cb)
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = random_field(rng, GRID)
        u = dilate(u, rng.uniform(0, 8))
        assert float(h(grad_norm(u))) <= energy(model, u) * (1 + 1e-12) + 1e-12 * abs(energy(model, u))


def test_resample_and_interpolation():
    u = gaussian()
    other = RadialGrid(1e-4, 1e2, 2048)
    v = resample(dilate(u, 0.3), other)
    assert mass_norm(v) == pytest.approx(mass_norm(u), rel=1e-6)
    r = np.array([0.1, 0.5, 1.0])
    assert np.allclose(u(r), np.exp(-r * r), rtol=1e-8)


def test_dump_load_round_trip(tmp_path):
    u = dilate(normalize_mass(gaussian(), 2.0), 0.7)
    path = tmp_path / "u.txt"
    dump_field(u, path)
    w = load_field(path)
    assert mass_norm(w) == pytest.approx(2.0, rel=1e-12)
    assert lp_norm(w, 4.0) == pytest.approx(lp_norm(u, 4.0), rel=1e-12)
    assert grad_norm_sq(w) == pytest.approx(grad_norm_sq(u), rel=1e-10)


def test_stiffness_and_laplacian_are_consistent():
    u = gaussian()
    v = np.asarray(u.values)
    weak = float(v @ (GRID.stiffness @ v))
    strong = -float((GRID.weights * v) @ GRID.apply_laplacian(v))
    assert weak == pytest.approx(GAUSS_GRAD_SQ, rel=1e-11)
    assert strong == pytest.approx(GAUSS_GRAD_SQ, rel=1e-11)
    assert np.allclose(GRID.stiffness @ np.ones(GRID.n), 0, atol=1e-8)


def test_field_validation():
    with pytest.raises(ValueError):
        RadialField(GRID, np.zeros(10))
    with pytest.raises(ValueError):
        RadialField(GRID, np.full(GRID.n, np.nan))
