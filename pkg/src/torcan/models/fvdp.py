"""Forced van der Pol oscillator in the relaxation limit, Cartesian form.

The cylindrical system (x, y, theta) with high-frequency forcing is rotated
into Cartesian fast variables u = x cos(theta), v = x sin(theta), making it a
2-fast/1-slow system:

    u' = u - w*v - u*(u^2+v^2)/3 + u*y/r,
    v' = w*u + v - v*(u^2+v^2)/3 + v*y/r,
    y' = eps * (-r + alpha + beta*u/r),        r = sqrt(u^2+v^2).

The layer problem has a single folded limit cycle (cos wt, sin wt) at
y = -2/3; the spiking/bursting transition (torus canard explosion) sits at
alpha = 1 - eps/8 up to exponentially small error.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = ("omega", "alpha", "beta")
DEFAULTS = {"omega": 1.0, "alpha": 1.0, "beta": 0.0}


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    omega, alpha, beta = par[0], par[1], par[2]
    u, v = x[0], x[1]
    r2 = u * u + v * v
    r = np.sqrt(r2)
    s = 1.0 - r2 / 3.0 + y[0] / r
    out[0] = u * s - omega * v
    out[1] = v * s + omega * u
    out[2] = -r + alpha + beta * u / r


def fold_cycle_radius_oracle(y, lo=1.0, hi=3.0, tol=1e-12):
    """Outer root of r - r^3/3 + y = 0 by bisection (attracting layer cycle)."""
    fun = lambda r: r - r ** 3 / 3.0 + y
    a, b = lo, hi
    if fun(a) * fun(b) > 0:
        raise ValueError("no attracting-cycle radius bracketed")
    while b - a > tol:
        m = 0.5 * (a + b)
        if fun(a) * fun(m) <= 0:
            b = m
        else:
            a = m
    return 0.5 * (a + b)


# Averaged coefficients of the folded cycle (independent of omega, beta).
TABLE_COEFFS = {
    "a_bar": 1.0, "b_bar": -1.0, "c_bar": 0.0, "xi_bar": -1.0 / 3.0,
    "d_bar": -1.0, "e_bar": 0.0, "eta_bar": 0.0,
}


def build():
    return SlowFastSystem(
        name="fvdp",
        k_slow=1,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("u", "v", "y"),
        kernel=_kernel,
        domain_lo=np.array([-4.0, -4.0, -3.0]),
        domain_hi=np.array([4.0, 4.0, 3.0]),
        provenance="forced van der Pol, relaxation limit, Cartesian rotation",
        envelope_obs=("fast_radius", -1),
        cycle_seed=((np.array([1.8, 0.0]), np.array([-0.5])), 60.0),
        fold_hint={'y0': [-0.5], 'x0': [1.8, 0.0], 'settle': 60.0,
                   'free_index': 0, 'range': (-0.9, -0.4), 'direction': -1.0,
                   'step': 0.05},
        eps_default=0.01,
    )
