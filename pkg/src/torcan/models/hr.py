"""Modified Hindmarsh-Rose system (subHopf/fold-cycle bursting regime).

    x' = s*a*x^3 - s*x^2 - y - b*z,
    y' = phi*(x^2 - y),
    z' = eps*(s*alpha*x + beta - k*z),

fast (x, y), slow z.  beta and s are the control parameters swept in the
spiking/bursting analysis; their defaults here sit on the fold-cycle branch.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = ("a", "phi", "alpha", "k", "b", "s", "beta")

DEFAULTS = {
    "a": 0.5, "phi": 1.0, "alpha": -0.1, "k": 0.2, "b": 10.0,
    "s": 1.6, "beta": 2.0,
}


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    a, phi, alpha, k, b, s, beta = (
        par[0], par[1], par[2], par[3], par[4], par[5], par[6]
    )
    xx, yy = x[0], x[1]
    out[0] = s * a * xx * xx * xx - s * xx * xx - yy - b * y[0]
    out[1] = phi * (xx * xx - yy)
    out[2] = s * alpha * xx + beta - k * y[0]


def build():
    return SlowFastSystem(
        name="hr",
        k_slow=1,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("x", "y", "z"),
        kernel=_kernel,
        domain_lo=np.array([-6.0, -5.0, -60.0]),
        domain_hi=np.array([8.0, 40.0, 60.0]),
        provenance="modified Hindmarsh-Rose (dimensionless)",
        envelope_obs=("coord", 0),
        cycle_seed=((np.array([2.0, 2.0]), np.array([0.2])), 100.0),
        eps_default=0.001,
    )
