"""Model registry: the paper's application models plus a closed-form oracle."""
from __future__ import annotations

from .base import DomainError, EvaluationError, SlowFastSystem
from . import fvdp, hr, mlt, ph, radial, wci

_BUILDERS = {
    "ph": ph.build,
    "mlt": mlt.build,
    "hr": hr.build,
    "wci": wci.build,
    "fvdp": fvdp.build,
    "radial_oracle": radial.build,
}

_CACHE: dict = {}


def model_names():
    return sorted(_BUILDERS)


def get_model(name: str) -> SlowFastSystem:
    """Registered system with the paper's default parameters installed."""
    if name not in _BUILDERS:
        raise KeyError(
            f"unknown model '{name}'; registered models: {', '.join(model_names())}"
        )
    if name not in _CACHE:
        _CACHE[name] = _BUILDERS[name]()
    return _CACHE[name]


def registry_info():
    """Name -> metadata map for CLI dumps."""
    out = {}
    for name in model_names():
        sys = get_model(name)
        out[name] = {
            "k_slow": sys.k_slow,
            "state_names": list(sys.state_names),
            "default_params": dict(sys.defaults),
            "eps_default": sys.eps_default,
            "domain_box": [
                [float(lo), float(hi)]
                for lo, hi in zip(sys.domain_lo, sys.domain_hi)
            ],
            "provenance": sys.provenance,
        }
    return out


__all__ = [
    "DomainError", "EvaluationError", "SlowFastSystem",
    "get_model", "model_names", "registry_info",
]
