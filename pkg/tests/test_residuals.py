import numpy as np
import pytest

from kirchnorm.field import RadialField, RadialGrid, dilate, grad_norm_sq, lp_norm_p, normalize_mass
from kirchnorm.groundstate import solve_limit_ground_state
from kirchnorm.model import ModelParams
from kirchnorm.residuals import least_squares_multiplier, multiplier_estimate, pde_residual

from fields import random_field

GRID = RadialGrid.cached()


def test_multiplier_formula():
    model = ModelParams(2.0, 0.5, 1.5, 0.3, 5.0, 3.0)
    u = dilate(normalize_mass(RadialField.from_function(GRID, lambda r: np.exp(-r * r)), 1.5), 0.4)
    g = grad_norm_sq(u)
    expected = (2.0 * g + 0.5 * g * g - 0.3 * lp_norm_p(u, 3.0) - lp_norm_p(u, 5.0)) / 1.5**2
    assert multiplier_estimate(model, u) == pytest.approx(expected, rel=1e-14)


@pytest.fixture(scope="module")
def ground_b0():
    model = ModelParams(1, 0, 1, 0, 5, 3)
    return model, solve_limit_ground_state(model)


def test_exact_solution_has_small_residual(ground_b0):
    model, res = ground_b0
    assert pde_residual(model, res.field, res.lam) <= 1e-6
    assert least_squares_multiplier(model, res.field) == pytest.approx(res.lam, rel=1e-6)


def test_least_squares_minimizes_residual(ground_b0):
    model, res = ground_b0
    lam = least_squares_multiplier(model, res.field)
    base = pde_residual(model, res.field, lam, relative=False)
    for d in (1e-3, -1e-3):
        assert pde_residual(model, res.field, lam * (1 + d), relative=False) > base


def test_negative_control_random_fields():
    model = ModelParams(1, 1, 1, 0.5, 5.5, 5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = random_field(rng, GRID)
        lam = least_squares_multiplier(model, u)
        assert pde_residual(model, u, lam) > 1e-2


def test_perturbed_solution_fails_control(ground_b0):
    model, res = ground_b0
    u = res.field
    r = np.asarray(u.grid.nodes)
    bumped = u.with_values(u.values * (1 + 0.05 * np.exp(-((r * np.exp(-u.dilation_log) - 1) ** 2))))
    assert pde_residual(model, bumped, least_squares_multiplier(model, bumped)) > 1e-2
