"""Wilson-Cowan-Izhikevich model of coupled excitatory/inhibitory populations.

    x' = -x + S(r_x + a*x - b*y + u),
    y' = -y + S(r_y + c*x - d*y + f*u),
    u' = eps*(k - x),                       S(s) = 1/(1 + exp(-s)),

fast (x, y), slow u.  k and r_x are the control parameters (fold/fold-cycle
bursting regime); defaults sit near the fold-of-cycles branch.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = ("r_x", "r_y", "a", "b", "c", "d", "f", "k")

DEFAULTS = {
    "r_x": -14.0, "r_y": -9.7, "a": 10.5, "b": 10.0, "c": 10.0,
    "d": -2.0, "f": 0.3, "k": 0.5,
}


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    r_x, r_y = par[0], par[1]
    a, b, c, d, f, k = par[2], par[3], par[4], par[5], par[6], par[7]
    xx, yy = x[0], x[1]
    u = y[0]
    out[0] = -xx + 1.0 / (1.0 + np.exp(-(r_x + a * xx - b * yy + u)))
    out[1] = -yy + 1.0 / (1.0 + np.exp(-(r_y + c * xx - d * yy + f * u)))
    out[2] = k - xx


def build():
    return SlowFastSystem(
        name="wci",
        k_slow=1,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("x", "y", "u"),
        kernel=_kernel,
        domain_lo=np.array([-0.5, -0.5, -40.0]),
        domain_hi=np.array([1.5, 1.5, 40.0]),
        provenance="Wilson-Cowan-Izhikevich populations (dimensionless)",
        envelope_obs=("coord", 0),
        cycle_seed=((np.array([0.5, 0.2]), np.array([3.0])), 150.0),
        fold_hint={'y0': [12.0], 'x0': [0.5, 0.2], 'settle': 600.0,
                   'free_index': 0, 'range': (6.0, 25.0), 'direction': -1.0,
                   'step': 0.2},
        eps_default=0.001,
    )
