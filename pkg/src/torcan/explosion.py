"""Torus-canard-explosion predictor for 2-fast/1-slow systems.

With the extended averaged coefficients of a k = 1 toral folded singularity,
the spiking/bursting transition sits (up to exponentially small error) where

    g_bar(param) = lambda_bar * eps,
    lambda_bar = d/(8 b^3) * (b c d + 2 b^2 e + 2 a b eta - 3 a d xi),

valid when a_bar * d_bar < 0 (otherwise the underlying Melnikov integral
diverges and no explosion prediction is made).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import averaging, cycles


class InapplicableError(RuntimeError):
    """a_bar * d_bar >= 0: the explosion formula does not apply."""


def lambda_bar(coeffs):
    """Explosion coefficient from extended k = 1 averaged coefficients."""
    if coeffs.xi_bar is None or coeffs.eta_bar is None:
        raise ValueError("extended coefficients (xi_bar, eta_bar) required")
    a = float(coeffs.a_bar[0])
    b = float(coeffs.b_bar)
    c = float(coeffs.c_bar[0])
    d = float(coeffs.d_bar[0])
    e = float(coeffs.e_bar[0, 0])
    xi = float(coeffs.xi_bar)
    eta = float(coeffs.eta_bar)
    if b == 0.0:
        raise ValueError("b_bar = 0: degenerate fold")
    if a * d >= 0.0:
        raise InapplicableError(f"a_bar*d_bar = {a * d:.3e} >= 0")
    return (d / (8.0 * b ** 3)) * (b * c * d + 2.0 * b * b * e
                                   + 2.0 * a * b * eta - 3.0 * a * d * xi)


@dataclass
class ExplosionPrediction:
    lambda_bar: float
    param: str
    predicted_value: float
    eps: float
    ad_product: float
    tfs_value: float

    def as_dict(self):
        return {
            "lambda_bar": self.lambda_bar,
            "param": self.param,
            "predicted_value": self.predicted_value,
            "eps": self.eps,
            "ad_product": self.ad_product,
            "tfs_value": self.tfs_value,
        }


def _fold_coeffs_at(system, param, value, orbit, extended=True):
    ov = dict(orbit.overrides)
    ov[param] = float(value)
    orb = cycles.solve_folded_cycle(system, orbit, free_index=0, overrides=ov)
    co = averaging.averaged_coefficients(system, orb, extended=extended)
    return orb, co


def explosion_locus(system, param, eps, seed_fold, bracket=None, tol=1e-12,
                    max_iter=60):
    """Predicted explosion value of ``param`` at time-scale ratio ``eps``.

    Starting from a folded cycle ``seed_fold`` (any parameter value), the
    toral folded singularity g_bar(param) = 0 is located by a guarded secant;
    lambda_bar is evaluated there and g_bar(param) = lambda_bar*eps is solved
    the same way.  eps = 0 returns the singularity itself.
    """
    if system.k_slow != 1:
        raise ValueError("explosion prediction is defined for k = 1 systems")
    orbit = getattr(seed_fold, "orbit", seed_fold)
    p0 = float(orbit.overrides.get(param, system.defaults[param]))
    step = bracket if bracket is not None else max(0.1, 0.1 * abs(p0))

    state = {"orb": orbit.copy()}

    def gbar(value, extended=False):
        orb, co = _fold_coeffs_at(system, param, value, state["orb"], extended)
        state["orb"] = orb
        state["co"] = co
        return float(co.g_bar[0])

    p_star = _secant(gbar, p0, p0 + step, 0.0, tol, max_iter)
    _, co_star = _fold_coeffs_at(system, param, p_star, state["orb"], extended=True)
    lam = lambda_bar(co_star)
    ad = float(co_star.a_bar[0] * co_star.d_bar[0])
    if eps == 0.0:
        pred = p_star
    else:
        target = lam * eps
        pred = _secant(gbar, p_star, p_star + step * 1e-2, target, tol, max_iter)
    return ExplosionPrediction(lambda_bar=lam, param=param,
                               predicted_value=float(pred), eps=float(eps),
                               ad_product=ad, tfs_value=float(p_star))


def _secant(fun, x0, x1, target, tol, max_iter):
    f0 = fun(x0) - target
    if abs(f0) <= tol:
        return x0
    f1 = fun(x1) - target
    for _ in range(max_iter):
        if f1 == f0:
            raise RuntimeError("secant stalled (flat g_bar)")
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        f2 = fun(x2) - target
        x0, f0, x1, f1 = x1, f1, x2, f2
        if abs(f1) <= tol:
            return x1
    raise RuntimeError(f"secant did not reach |g_bar - target| <= {tol}")
