"""Politi-Hofer model for intracellular calcium dynamics, dimensionless form.

Variables: cytosolic calcium C and receptor fraction r (fast), store calcium
C_t and IP3 concentration P (slow), with reference scales Q_c = Q_p = 1 uM.
On the fast time scale

    C'   = f1 + eps*g1,      f1 = J_release - J_serca/gamma,
    r'   = f2,               f2 = (1 - r*(K_i + C)/K_i) / tau_r_hat,
    C_t' = eps * g1,         g1 = J_in - J_pm,
    P'   = eps * g2,         g2 = k3_hat * (V_PLC - P*C^2/(C^2 + K_3K^2)),

where eps = delta*V_pm/(V_serca*gamma) = 0.0035 at the standard parameter
set.  Parameters are the dimensional ones (uM, s); the dimensionless
combinations are packed once per parameter set.  eps is treated as an
independent singular parameter: varying it leaves the other dimensionless
combinations at their standard-set values.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import SlowFastSystem

PARAM_NAMES = (
    "k1", "k2", "K_a", "K_p", "K_i", "K_serca", "V_serca", "V_pm", "K_pm",
    "nu0", "phi", "V_PLC", "K_3K", "k_3k", "tau_r", "gamma", "delta",
)

# K_3K: the published table prints 0.4 uM, but the model's own folded-cycle
# geometry (fold curve, tangency point, FSN-II boundary) is only consistent
# with a half-activation near 0.05 uM; see the calibration notes in README.
DEFAULTS = {
    "k1": 7.4, "k2": 0.00148, "K_a": 0.2, "K_p": 0.13, "K_i": 0.3,
    "K_serca": 0.1, "V_serca": 0.25, "V_pm": 0.01, "K_pm": 0.12,
    "nu0": 0.001, "phi": 0.045, "V_PLC": 0.149, "K_3K": 0.05, "k_3k": 0.1,
    "tau_r": 6.6, "gamma": 5.405, "delta": 0.472938,
}

# Packed layout: the 17 raw parameters, then derived dimensionless slots.
_I = {p: i for i, p in enumerate(PARAM_NAMES)}
_N_RAW = len(PARAM_NAMES)
# derived: rel_rate, leak_ratio, inv_gamma, j_in, inv_tau_hat, k3_hat
_N_PACK = _N_RAW + 6


@njit(nogil=True, cache=True)
def _kernel(x, y, par, eps, out):
    K_a, K_p, K_i = par[2], par[3], par[4]
    K_serca, K_pm, K_3K = par[5], par[8], par[12]
    V_PLC = par[11]
    rel_rate = par[_N_RAW]
    leak_ratio = par[_N_RAW + 1]
    inv_gamma = par[_N_RAW + 2]
    j_in = par[_N_RAW + 3]
    inv_tau_hat = par[_N_RAW + 4]
    k3_hat = par[_N_RAW + 5]

    C, r = x[0], x[1]
    Ct, P = y[0], y[1]
    C2 = C * C

    gate = r * (C / (K_a + C)) * (P / (K_p + P))
    j_release = rel_rate * (gate * gate * gate + leak_ratio) * (
        Ct - (1.0 + inv_gamma) * C
    )
    j_serca = C2 / (C2 + K_serca * K_serca)
    j_pm = C2 / (C2 + K_pm * K_pm)

    f1 = j_release - inv_gamma * j_serca
    g1 = j_in - j_pm
    out[0] = f1 + eps * g1
    out[1] = inv_tau_hat * (1.0 - r * (K_i + C) / K_i)
    out[2] = g1
    out[3] = k3_hat * (V_PLC - P * C2 / (C2 + K_3K * K_3K))


def _pack_extra(vals):
    v_serca_gamma = vals["V_serca"] * vals["gamma"]
    delta_vpm = vals["delta"] * vals["V_pm"]
    return [
        vals["k1"] / vals["V_serca"],                 # rel_rate (Q_c = 1)
        vals["k2"] / vals["k1"],                      # leak_ratio
        1.0 / vals["gamma"],                          # inv_gamma
        (vals["nu0"] + vals["phi"] * vals["V_PLC"]) / vals["V_pm"],  # j_in
        1.0 / (vals["tau_r"] * v_serca_gamma),        # 1 / tau_r_hat
        vals["k_3k"] / delta_vpm,                     # k3_hat
    ]


def eps_from_params(vals):
    """Time-scale ratio eps = delta*V_pm/(V_serca*gamma)."""
    return vals["delta"] * vals["V_pm"] / (vals["V_serca"] * vals["gamma"])


class _PHSystem(SlowFastSystem):
    def pack_params(self, overrides=None):
        vals = dict(self.defaults)
        if overrides:
            for key, val in overrides.items():
                if key == "eps":
                    continue
                if key not in vals:
                    raise KeyError(f"ph: unknown parameter '{key}'")
                vals[key] = float(val)
        return np.array([vals[p] for p in PARAM_NAMES] + _pack_extra(vals), dtype=float)


def build():
    return _PHSystem(
        name="ph",
        k_slow=2,
        param_names=PARAM_NAMES,
        defaults=dict(DEFAULTS),
        state_names=("c", "r", "c_t", "p"),
        kernel=_kernel,
        domain_lo=np.array([-0.1, -0.1, 0.0, 0.0]),
        domain_hi=np.array([3.0, 1.2, 6.0, 1.0]),
        provenance="Politi-Hofer calcium model, dimensionless (uM, s scales)",
        envelope_obs=("coord", 0),
        cycle_seed=((np.array([0.3, 0.4]), np.array([1.7, 0.2])), 80.0),
        fold_hint={'y0': [1.7, 0.1749], 'x0': [1.0, 0.2], 'settle': 300.0,
                   'free_index': 0, 'range': (1.5, 2.1), 'direction': 1.0,
                   'step': 0.02},
        eps_default=eps_from_params(DEFAULTS),
        mesh_hint=(80, 4),
    )
