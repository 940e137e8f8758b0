"""Finite-difference derivatives of model vector fields.

Central differences throughout; the second and third directional derivatives
use one Richardson extrapolation step so that the averaged-coefficient
quadratures downstream stay accurate to ~1e-8.  Models may install analytic
Jacobians in ``jac_hooks`` ("jac_x", "jac_y"); everything else falls back to
these routines.  All derivatives are taken at eps = 0.
"""
from __future__ import annotations

import numpy as np

# Step-size bases, scaled by max(1, |coordinate|) where relevant.
H_JAC = 1e-6      # first derivatives (spec'd step law)
H_DIR2 = 2e-4     # directional second derivatives, Richardson h and h/2
H_DIR3 = 4e-3     # directional third derivatives, Richardson h and h/2
H_MIX = 1e-4      # mixed x-y second derivatives


def _fg(system, X, Y, par):
    return system.fg_batch(X, Y, par=par, eps=0.0)


def jac_x(system, X, Y, par):
    """(D_x f, D_x g) stacked over n states -> (n,2,2), (n,k,2)."""
    hook = system.jac_hooks.get("jac_x")
    if hook is not None:
        return hook(X, Y, par)
    n, k = X.shape[0], system.k_slow
    dxf = np.empty((n, 2, 2))
    dxg = np.empty((n, k, 2))
    for j in range(2):
        h = np.maximum(H_JAC, H_JAC * np.abs(X[:, j]))
        Xp = X.copy(); Xp[:, j] += h
        Xm = X.copy(); Xm[:, j] -= h
        fp, gp = _fg(system, Xp, Y, par)
        fm, gm = _fg(system, Xm, Y, par)
        dxf[:, :, j] = (fp - fm) / (2 * h)[:, None]
        dxg[:, :, j] = (gp - gm) / (2 * h)[:, None]
    return dxf, dxg


def jac_y(system, X, Y, par):
    """(D_y f, D_y g) stacked over n states -> (n,2,k), (n,k,k)."""
    hook = system.jac_hooks.get("jac_y")
    if hook is not None:
        return hook(X, Y, par)
    n, k = X.shape[0], system.k_slow
    dyf = np.empty((n, 2, k))
    dyg = np.empty((n, k, k))
    for j in range(k):
        h = np.maximum(H_JAC, H_JAC * np.abs(Y[:, j]))
        Yp = Y.copy(); Yp[:, j] += h
        Ym = Y.copy(); Ym[:, j] -= h
        fp, gp = _fg(system, X, Yp, par)
        fm, gm = _fg(system, X, Ym, par)
        dyf[:, :, j] = (fp - fm) / (2 * h)[:, None]
        dyg[:, :, j] = (gp - gm) / (2 * h)[:, None]
    return dyf, dyg


def _dir2(system, X, Y, Q, par, h, want_g=False):
    """Plain central second difference along unit directions Q, step h (n,)."""
    fp, gp = _fg(system, X + h[:, None] * Q, Y, par)
    fm, gm = _fg(system, X - h[:, None] * Q, Y, par)
    fc, gc = _fg(system, X, Y, par)
    up, uc, um = (gp, gc, gm) if want_g else (fp, fc, fm)
    return (up - 2 * uc + um) / (h * h)[:, None]


def dir2(system, X, Y, Q, par, component="f"):
    """(q . grad_x)^2 of f (n,2) or g (n,k), Richardson-extrapolated."""
    scale = np.maximum(1.0, np.abs(X).max(axis=1))
    h = H_DIR2 * scale
    want_g = component == "g"
    d_h = _dir2(system, X, Y, Q, par, h, want_g)
    d_h2 = _dir2(system, X, Y, Q, par, h / 2, want_g)
    return (4 * d_h2 - d_h) / 3


def _dir3(system, X, Y, Q, par, h):
    hQ = h[:, None] * Q
    f2p, _ = _fg(system, X + 2 * hQ, Y, par)
    f1p, _ = _fg(system, X + hQ, Y, par)
    f1m, _ = _fg(system, X - hQ, Y, par)
    f2m, _ = _fg(system, X - 2 * hQ, Y, par)
    return (f2p - 2 * f1p + 2 * f1m - f2m) / (2 * h ** 3)[:, None]


def dir3_f(system, X, Y, Q, par):
    """(q . grad_x)^3 f, Richardson-extrapolated -> (n,2)."""
    scale = np.maximum(1.0, np.abs(X).max(axis=1))
    h = H_DIR3 * scale
    d_h = _dir3(system, X, Y, Q, par, h)
    d_h2 = _dir3(system, X, Y, Q, par, h / 2)
    return (4 * d_h2 - d_h) / 3


def mixed_H(system, X, Y, Q, par):
    """H_ij = q . grad_x (df_i/dy_j) -> (n, 2, k)."""
    n, k = X.shape[0], system.k_slow
    scale = np.maximum(1.0, np.abs(X).max(axis=1))
    hx = (H_MIX * scale)[:, None] * Q
    out = np.empty((n, 2, k))
    for j in range(k):
        hy = np.maximum(H_MIX, H_MIX * np.abs(Y[:, j]))
        Yp = Y.copy(); Yp[:, j] += hy
        Ym = Y.copy(); Ym[:, j] -= hy
        fpp, _ = _fg(system, X + hx, Yp, par)
        fpm, _ = _fg(system, X + hx, Ym, par)
        fmp, _ = _fg(system, X - hx, Yp, par)
        fmm, _ = _fg(system, X - hx, Ym, par)
        out[:, :, j] = (fpp - fpm - fmp + fmm) / (
            4 * (H_MIX * scale) * hy
        )[:, None]
    return out


def grad_scalar_x(func, X, h=1e-5):
    """Gradient wrt the two fast coordinates of a scalar field func(X)->(n,).

    Used for constraint-row assembly (e.g. d/dx of tr D_x f), where func is
    itself FD-based; the larger step keeps the nested-difference noise down.
    """
    n = X.shape[0]
    out = np.empty((n, 2))
    for j in range(2):
        hj = np.maximum(h, h * np.abs(X[:, j]))
        Xp = X.copy(); Xp[:, j] += hj
        Xm = X.copy(); Xm[:, j] -= hj
        out[:, j] = (func(Xp) - func(Xm)) / (2 * hj)
    return out
