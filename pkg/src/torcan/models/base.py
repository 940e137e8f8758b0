"""Slow/fast system abstraction.

A system is a 2-fast/k-slow vector field

    x' = f(x, y, eps),   y' = eps * g(x, y, eps),

with the layer problem obtained at eps = 0 (y frozen).  Each concrete model
supplies a single numba kernel that writes (f, g) for one state; everything
else (full right-hand side, batch evaluation, derivatives) is derived from it
so there is exactly one source of truth for the model equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit


class DomainError(ValueError):
    """State left the model's documented domain box."""

    def __init__(self, name, coord, value, lo, hi):
        self.coord = coord
        super().__init__(
            f"{name}: coordinate '{coord}' = {value:.6g} outside domain "
            f"[{lo:.6g}, {hi:.6g}]"
        )


class EvaluationError(RuntimeError):
    """Vector field or derivative evaluated non-finite."""


def make_full_rhs(kernel, k_slow):
    """In-place full right-hand side (f, eps*g) built from a model kernel."""
    n = 2 + k_slow

    @njit(nogil=True)
    def full_rhs(z, par, eps, out):
        kernel(z[:2], z[2:n], par, eps, out)
        for j in range(2, n):
            out[j] *= eps

    return full_rhs


def make_batch_eval(kernel, k_slow):
    """Vectorized (f, g) evaluation over rows of X (n,2) and Y (n,k)."""
    n = 2 + k_slow

    @njit(nogil=True)
    def batch(X, Y, par, eps, out):
        for i in range(X.shape[0]):
            kernel(X[i], Y[i], par, eps, out[i, :n])

    return batch


@dataclass
class SlowFastSystem:
    """A 2-fast/k-slow vector field with parameters and derivative access.

    All evaluators are pure functions of their arguments and safe for
    concurrent read-only use.
    """

    name: str
    k_slow: int
    param_names: tuple
    defaults: dict
    state_names: tuple
    kernel: Callable          # njit (x(2,), y(k,), par, eps, out(2+k,))
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    provenance: str = ""
    envelope_obs: tuple = ("coord", 0)   # ("coord", j) | ("fast_radius", -1)
    cycle_seed: tuple | None = None      # ((x0, y0), settle_time) hint
    fold_hint: dict | None = None        # bootstrap data for fold-of-cycles solves
    mesh_hint: tuple = (50, 4)
    jac_hooks: dict = field(default_factory=dict)
    eps_default: float = 1e-3
    full_rhs: Callable = None
    batch_eval: Callable = None

    n_fast: int = 2

    def __post_init__(self):
        if self.full_rhs is None:
            self.full_rhs = make_full_rhs(self.kernel, self.k_slow)
        if self.batch_eval is None:
            self.batch_eval = make_batch_eval(self.kernel, self.k_slow)
        self.domain_lo = np.asarray(self.domain_lo, dtype=float)
        self.domain_hi = np.asarray(self.domain_hi, dtype=float)

    # -- parameters --------------------------------------------------------

    def pack_params(self, overrides=None):
        """Parameter vector in kernel order, with optional name overrides."""
        vals = dict(self.defaults)
        if overrides:
            for key, val in overrides.items():
                if key == "eps":
                    continue
                if key not in vals:
                    raise KeyError(
                        f"{self.name}: unknown parameter '{key}'; "
                        f"known: {', '.join(self.param_names)}"
                    )
                vals[key] = float(val)
        return np.array([vals[p] for p in self.param_names], dtype=float)

    @property
    def params(self):
        """Default parameter map (eps included for convenience)."""
        out = dict(self.defaults)
        out["eps"] = self.eps_default
        return out

    # -- evaluation --------------------------------------------------------

    def check_domain(self, x, y):
        z = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
        for j, (val, lo, hi) in enumerate(zip(z, self.domain_lo, self.domain_hi)):
            if not (lo <= val <= hi):
                raise DomainError(self.name, self.state_names[j], val, lo, hi)

    def fg(self, x, y, par=None, eps=0.0):
        """(f, g) at a single state, without the eps scaling of the slow block."""
        par = self.pack_params() if par is None else par
        out = np.empty(2 + self.k_slow)
        self.kernel(np.asarray(x, float), np.asarray(y, float), par, eps, out)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.name}: non-finite rhs at x={x}, y={y}")
        return out[:2].copy(), out[2:].copy()

    def eval_rhs(self, x, y, eps, par=None, check=True):
        """Full right-hand side (f(x,y,eps), eps*g(x,y,eps)); eps=0 is the layer problem."""
        if check:
            self.check_domain(x, y)
        f, g = self.fg(x, y, par=par, eps=eps)
        return np.concatenate([f, eps * g])

    def fg_batch(self, X, Y, par=None, eps=0.0):
        """(F, G) stacked over n states; X (n,2), Y (n,k)."""
        par = self.pack_params() if par is None else par
        X = np.ascontiguousarray(X, dtype=float)
        Y = np.ascontiguousarray(Y, dtype=float)
        out = np.empty((X.shape[0], 2 + self.k_slow))
        self.batch_eval(X, Y, par, eps, out)
        return out[:, :2], out[:, 2:]

    def jacobians(self, x, y, par=None):
        """D_x f, D_y f, D_x g, D_y g at (x, y, eps=0), analytic or central FD."""
        from .. import numderiv

        par = self.pack_params() if par is None else par
        X = np.asarray(x, float).reshape(1, 2)
        Y = np.asarray(y, float).reshape(1, self.k_slow)
        dxf, dxg = numderiv.jac_x(self, X, Y, par)
        dyf, dyg = numderiv.jac_y(self, X, Y, par)
        mats = {"dxf": dxf[0], "dyf": dyf[0], "dxg": dxg[0], "dyg": dyg[0]}
        for m in mats.values():
            if not np.all(np.isfinite(m)):
                raise EvaluationError(f"{self.name}: non-finite derivative at x={x}, y={y}")
        return mats
