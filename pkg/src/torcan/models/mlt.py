"""Morris-Lecar-Terman model: planar Morris-Lecar with linear current feedback.

Fast variables (v, w), slow applied current y:

    v' = y - g_L*(v - V_L) - g_K*w*(v - V_K) - g_Ca*m_inf(v)*(v - V_Ca),
    w' = (w_inf(v) - w)/tau_w(v),
    y' = eps*(k - v).

The slow field g = k - v makes the toral-folded-singularity condition the
stationary-average-drift condition v_bar = k.  k and g_Ca are the control
parameters (no standard values; defaults picked in the fold-cycle regime).
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = (
    "g_L", "g_K", "g_Ca", "V_L", "V_K", "V_Ca",
    "c1", "c2", "c3", "c4", "tau0", "k",
)

DEFAULTS = {
    "g_L": 0.5, "g_K": 2.0, "g_Ca": 1.25, "V_L": -0.5, "V_K": -0.7,
    "V_Ca": 1.0, "c1": -0.01, "c2": 0.15, "c3": 0.1, "c4": 0.16,
    "tau0": 3.0, "k": 0.0,
}


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    g_L, g_K, g_Ca = par[0], par[1], par[2]
    V_L, V_K, V_Ca = par[3], par[4], par[5]
    c1, c2, c3, c4, tau0, k = par[6], par[7], par[8], par[9], par[10], par[11]
    v, w = x[0], x[1]
    m_inf = 0.5 * (1.0 + np.tanh((v - c1) / c2))
    w_inf = 0.5 * (1.0 + np.tanh((v - c3) / c4))
    tau_w = tau0 / np.cosh((v - c3) / (2.0 * c4))
    out[0] = y[0] - g_L * (v - V_L) - g_K * w * (v - V_K) - g_Ca * m_inf * (v - V_Ca)
    out[1] = (w_inf - w) / tau_w
    out[2] = k - v


def build():
    return SlowFastSystem(
        name="mlt",
        k_slow=1,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("v", "w", "y"),
        kernel=_kernel,
        domain_lo=np.array([-1.5, -0.5, -1.0]),
        domain_hi=np.array([1.5, 1.5, 1.0]),
        provenance="Morris-Lecar with linear feedback control (dimensionless)",
        envelope_obs=("coord", 0),
        cycle_seed=((np.array([0.1, 0.3]), np.array([0.06])), 200.0),
        fold_hint={'y0': [0.10], 'x0': [0.1, 0.3], 'settle': 400.0,
                   'free_index': 0, 'range': (0.05, 0.45), 'direction': 1.0,
                   'step': 0.01, 'N': 80},
        eps_default=0.001,
    )
