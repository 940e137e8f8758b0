"""Rotationally symmetric oracle model with a fold of limit cycles.

Fast field: f = (u*h - w*v, v*h + w*u) with h = y1 + 2 r^2 - r^4, r^2 = u^2+v^2,
slow field: g = (y2 - kappa*(r^2 - 1), sigma - y1).

The radial reduction r' = r*h(r^2, y1) makes every quantity available in
closed form: the fold cycle sits at r = 1, y1 = -1, where (with Phi == 1)

    a_bar = (1, 0),  b_bar = -4,  c_bar = (1, 0),  d_bar = (-2 kappa, 0),
    g_bar = (y2, sigma + 1),      e_bar = [[0, 1], [-1, 0]].

Eigenvalues of the desingularized averaged flow at the toral folded
singularity (y1, y2) = (-1, 0):  lambda = -kappa +/- sqrt(kappa^2 + 8(sigma+1)),
so sigma sweeps the singularity through saddle / node / focus regimes.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = ("omega", "kappa", "sigma")
DEFAULTS = {"omega": 1.0, "kappa": 1.0, "sigma": 0.0}


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    omega, kappa, sigma = par[0], par[1], par[2]
    u, v = x[0], x[1]
    r2 = u * u + v * v
    h = y[0] + 2.0 * r2 - r2 * r2
    out[0] = u * h - omega * v
    out[1] = v * h + omega * u
    out[2] = y[1] - kappa * (r2 - 1.0)
    out[3] = sigma - y[0]


def _jac_x(X, Y, par):
    omega, kappa = par[0], par[1]
    u, v = X[:, 0], X[:, 1]
    r2 = u * u + v * v
    h = Y[:, 0] + 2.0 * r2 - r2 * r2
    hp = 2.0 - 2.0 * r2          # dh/d(r2)
    n = X.shape[0]
    dxf = np.empty((n, 2, 2))
    dxf[:, 0, 0] = h + 2 * u * u * hp
    dxf[:, 0, 1] = 2 * u * v * hp - omega
    dxf[:, 1, 0] = 2 * u * v * hp + omega
    dxf[:, 1, 1] = h + 2 * v * v * hp
    dxg = np.zeros((n, 2, 2))
    dxg[:, 0, 0] = -2 * kappa * u
    dxg[:, 0, 1] = -2 * kappa * v
    return dxf, dxg


def _jac_y(X, Y, par):
    n = X.shape[0]
    dyf = np.zeros((n, 2, 2))
    dyf[:, 0, 0] = X[:, 0]
    dyf[:, 1, 0] = X[:, 1]
    dyg = np.zeros((n, 2, 2))
    dyg[:, 0, 1] = 1.0
    dyg[:, 1, 0] = -1.0
    return dyf, dyg


def exact_radial_rate(r, y1):
    """d r / dt = r*h of the radial reduction (oracle for Floquet tests)."""
    r2 = r * r
    return r * (y1 + 2 * r2 - r2 * r2)


def exact_eigenvalues(kappa, sigma):
    """Closed-form eigenvalues of the desingularized flow at the fold TFS."""
    disc = kappa * kappa + 8.0 * (sigma + 1.0)
    root = np.sqrt(complex(disc))
    return -kappa - root, -kappa + root


def build():
    return SlowFastSystem(
        name="radial_oracle",
        k_slow=2,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("u", "v", "y1", "y2"),
        kernel=_kernel,
        domain_lo=np.array([-3.0, -3.0, -4.0, -4.0]),
        domain_hi=np.array([3.0, 3.0, 4.0, 4.0]),
        provenance="closed-form rotationally symmetric oracle (this package)",
        envelope_obs=("fast_radius", -1),
        cycle_seed=((np.array([1.4, 0.0]), np.array([-0.5, 0.0])), 40.0),
        jac_hooks={"jac_x": _jac_x, "jac_y": _jac_y},
        fold_hint={'y0': [-0.5, 0.0], 'x0': [1.4, 0.0], 'settle': 40.0,
                   'free_index': 0, 'range': (-1.5, -0.3), 'direction': -1.0,
                   'step': 0.05},
        eps_default=1e-3,
    )
