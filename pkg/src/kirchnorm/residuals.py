"""Stationarity diagnostics: the Lagrange multiplier and the strong-form PDE residual.

A dilated field s * u is handled in stored coordinates y = e^s r.  After dividing by
the common factor e^{3s/2}, the equation for s * u reads

    -(a + b G) e^{2s} lap u - e^{p~ s}|u|^{p-2}u - mu e^{q~ s}|u|^{q-2}u = lam u,

and the L2 norm of the residual is unchanged by the change of variables.
"""

from __future__ import annotations

import math

import numpy as np

from kirchnorm.field import RadialField, grad_norm_sq, lp_exponent, lp_norm_p
from kirchnorm.model import ModelParams


def multiplier_estimate(model: ModelParams, u: RadialField) -> float:
    """lam = (a|grad u|^2 + b|grad u|^4 - mu|u|_q^q - |u|_p^p) / c^2."""
    g = grad_norm_sq(u)
    num = model.a * g + model.b * g * g - lp_norm_p(u, model.p)
    if model.mu > 0:
        num -= model.mu * lp_norm_p(u, model.q)
    return num / model.c**2


def _operator_terms(model: ModelParams, u: RadialField):
    """Stored-coordinate pieces of the strong form: (stiffness part, nonlinear part)."""
    s = u.dilation_log
    v = u.values
    stiff = (model.a + model.b * grad_norm_sq(u)) * math.exp(2.0 * s)
    lap = u.grid.apply_laplacian(v)
    nonlin = math.exp(lp_exponent(model.p) * s) * np.abs(v) ** (model.p - 2.0) * v
    if model.mu > 0:
        nonlin = nonlin + model.mu * math.exp(lp_exponent(model.q) * s) * np.abs(v) ** (model.q - 2.0) * v
    return -stiff * lap, nonlin


def _m_norm(u: RadialField, f: np.ndarray) -> float:
    return math.sqrt(float(np.dot(u.grid.weights, f * f)))


def least_squares_multiplier(model: ModelParams, u: RadialField) -> float:
    """The lam minimizing the mass-weighted strong-form residual."""
    lin, nonlin = _operator_terms(model, u)
    w = u.grid.weights
    return float(np.dot(w, (lin - nonlin) * u.values) / np.dot(w, u.values * u.values))


def pde_residual(model: ModelParams, u: RadialField, lam: float, relative: bool = True) -> float:
    """Mass-weighted norm of -(a+b|grad u|^2) lap u - lam u - |u|^{p-2}u - mu|u|^{q-2}u.

    With ``relative`` the norm is divided by the sum of the norms of the individual
    terms, so that 0 means an exact solution and values near 1 mean no cancellation.
    """
    lin, nonlin = _operator_terms(model, u)
    res = lin - nonlin - lam * u.values
    absval = _m_norm(u, res)
    if not relative:
        return absval
    scale = _m_norm(u, lin) + _m_norm(u, nonlin) + abs(lam) * _m_norm(u, u.values)
    return absval / scale if scale > 0 else absval
