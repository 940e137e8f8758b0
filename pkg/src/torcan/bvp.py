"""Periodic boundary-value problems by orthogonal collocation.

Limit cycles of the layer problem are solutions of

    x'(tau) = T f(x(tau), y, 0),   tau in [0,1],   x(0) = x(1),

discretized with piecewise Lagrange polynomials collocated at Gauss-Legendre
points (AUTO-style).  A phase condition removes the time-shift degeneracy;
additional scalar constraints (trace integral = 0, slow averages = 0,
pseudo-arclength) are appended to the same bordered Newton system, each one
paired with one extra free unknown (a slow coordinate or model parameter)
so the system stays square.

Newton solves use dense LU: the systems are only a few hundred unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numderiv


class NewtonError(RuntimeError):
    def __init__(self, msg, residual=np.inf):
        super().__init__(msg)
        self.residual = residual


class DegenerateCycleError(RuntimeError):
    pass


def _lagrange_matrices(m, sigma, pts):
    """Values and derivatives of the Lagrange basis on nodes ``sigma`` at ``pts``."""
    npts = len(pts)
    L = np.empty((npts, m + 1))
    Ld = np.empty((npts, m + 1))
    for j in range(m + 1):
        others = np.delete(sigma, j)
        den = np.prod(sigma[j] - others)
        for l, s in enumerate(pts):
            diffs = s - others
            L[l, j] = np.prod(diffs) / den
            dsum = 0.0
            for r in range(len(others)):
                mask = np.ones(len(others), dtype=bool)
                mask[r] = False
                dsum += np.prod(diffs[mask])
            Ld[l, j] = dsum / den
    return L, Ld


def _gauss01(m):
    nodes, weights = np.polynomial.legendre.leggauss(m)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _running_integral_matrix(m, gnodes):
    """W[l', l] = int္0^{g_l'} of the Gauss-node Lagrange basis polynomial l."""
    W = np.empty((m, m))
    for l in range(m):
        # coefficients of the basis polynomial through the Gauss nodes
        vals = np.zeros(m)
        vals[l] = 1.0
        coeffs = np.polyfit(gnodes, vals, m - 1)
        integ = np.polyint(coeffs)
        for lp in range(m):
            W[lp, l] = np.polyval(integ, gnodes[lp]) - np.polyval(integ, 0.0)
    return W


@dataclass
class Discretization:
    """Mesh data shared by every BVP on the same (N, m) grid."""

    N: int
    m: int

    def __post_init__(self):
        self.mesh = np.linspace(0.0, 1.0, self.N + 1)
        self.h = np.diff(self.mesh)
        self.sub = np.arange(self.m + 1) / self.m
        self.gnodes, self.gweights = _gauss01(self.m)
        self.L, self.Ld = _lagrange_matrices(self.m, self.sub, self.gnodes)
        self.Wrun = _running_integral_matrix(self.m, self.gnodes)
        self.n_nodes = self.N * self.m + 1
        # global tau of sub-nodes and collocation points
        self.node_tau = np.empty(self.n_nodes)
        for i in range(self.N):
            for j in range(self.m):
                self.node_tau[i * self.m + j] = self.mesh[i] + self.sub[j] * self.h[i]
        self.node_tau[-1] = 1.0
        self.colloc_tau = (self.mesh[:-1, None] + np.outer(self.h, self.gnodes)).ravel()
        self.wq = np.outer(self.h, self.gweights).ravel()   # sums to 1

    def interval_nodes(self, i):
        return slice(i * self.m, i * self.m + self.m + 1)

    def states_at_colloc(self, X):
        """Interpolate nodal states (n_nodes, d) to all collocation points."""
        d = X.shape[1]
        out = np.empty((self.N * self.m, d))
        for i in range(self.N):
            Xi = X[self.interval_nodes(i)]
            out[i * self.m:(i + 1) * self.m] = self.L @ Xi
        return out

    def derivs_at_colloc(self, X):
        d = X.shape[1]
        out = np.empty((self.N * self.m, d))
        for i in range(self.N):
            Xi = X[self.interval_nodes(i)]
            out[i * self.m:(i + 1) * self.m] = (self.Ld @ Xi) / self.h[i]
        return out

    def eval(self, X, tau):
        """Interpolated state at arbitrary tau in [0,1] (periodic wrap)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float)) % 1.0
        idx = np.clip(np.searchsorted(self.mesh, tau, side="right") - 1, 0, self.N - 1)
        out = np.empty((len(tau), X.shape[1]))
        for r, (t, i) in enumerate(zip(tau, idx)):
            s = (t - self.mesh[i]) / self.h[i]
            Lrow, _ = _lagrange_matrices(self.m, self.sub, np.array([s]))
            out[r] = Lrow[0] @ X[self.interval_nodes(i)]
        return out if len(tau) > 1 else out[0]

    def quad(self, vals_at_colloc):
        """Integral over [0,1] of values sampled at the collocation points."""
        return self.wq @ vals_at_colloc

    def running_integral(self, vals_at_colloc):
        """Antiderivative (from tau=0) at collocation points and interval ends.

        Returns (at_colloc (N*m,), at_mesh (N+1,)); exact for the per-interval
        interpolating polynomial of the integrand samples.
        """
        vals = vals_at_colloc.reshape(self.N, self.m)
        inc = self.h * (vals @ self.gweights)
        at_mesh = np.concatenate([[0.0], np.cumsum(inc)])
        at_col = (at_mesh[:-1, None] + self.h[:, None] * (vals @ self.Wrun.T)).ravel()
        return at_col, at_mesh


@dataclass
class PeriodicOrbit:
    """A limit cycle of the layer problem as a collocation solution."""

    model: str
    disc: Discretization
    X: np.ndarray               # (n_nodes, 2)
    T: float
    y: np.ndarray               # (k,) frozen slow coordinates
    par: np.ndarray             # packed parameter vector snapshot
    residual: float = np.nan
    overrides: dict = field(default_factory=dict)

    def eval(self, tau):
        return self.disc.eval(self.X, tau)

    def amplitude(self):
        return float(np.max(self.X.max(axis=0) - self.X.min(axis=0)))

    def copy(self):
        return PeriodicOrbit(self.model, self.disc, self.X.copy(), self.T,
                             self.y.copy(), self.par.copy(), self.residual,
                             dict(self.overrides))


# -- constraint and free-unknown descriptors ------------------------------------

PHASE_INTEGRAL = "phase_integral"
PHASE_PIN = "phase_pin"


@dataclass
class Constraint:
    kind: str                   # "trace" | "gbar" | "arclength"
    index: int = 0              # slow component for gbar
    data: dict = field(default_factory=dict)


@dataclass
class Free:
    kind: str                   # "T" | "y" | "param"
    index: int = 0              # slow component for y
    name: str = ""              # parameter name for param


class ExtendedBVP:
    """Square bordered system: collocation + periodicity + phase + constraints."""

    def __init__(self, system, disc, frees, constraints,
                 phase=PHASE_INTEGRAL, phase_ref=None, phase_pin_value=0.0):
        self.system = system
        self.disc = disc
        self.frees = list(frees)       # beyond the states; Free("T") comes first
        self.constraints = list(constraints)
        self.phase = phase
        self.phase_ref = phase_ref     # (Xref, Tref) nodal reference for integral phase
        self.phase_pin_value = phase_pin_value
        if len(self.frees) != 1 + len(self.constraints):
            raise ValueError("need one free unknown per constraint plus T")
        if self.frees[0].kind != "T":
            raise ValueError("first free unknown must be T")

    # unknown vector layout: [X.ravel(), free values...]
    def pack(self, X, T, y, pvals):
        extras = []
        i_p = 0
        for fr in self.frees:
            if fr.kind == "T":
                extras.append(T)
            elif fr.kind == "y":
                extras.append(y[fr.index])
            else:
                extras.append(pvals[i_p])
                i_p += 1
        return np.concatenate([X.ravel(), extras])

    def unpack(self, u, y0, overrides0):
        nn = self.disc.n_nodes
        X = u[:2 * nn].reshape(nn, 2)
        y = y0.copy()
        overrides = dict(overrides0)
        T = 0.0
        for val, fr in zip(u[2 * nn:], self.frees):
            if fr.kind == "T":
                T = val
            elif fr.kind == "y":
                y[fr.index] = val
            else:
                overrides[fr.name] = val
        return X, T, y, overrides

    # -- residual ---------------------------------------------------------------

    def residual(self, X, T, y, par, overrides=None):
        disc, system = self.disc, self.system
        nc = disc.N * disc.m
        xc = disc.states_at_colloc(X)
        dxc = disc.derivs_at_colloc(X)
        Y = np.broadcast_to(y, (nc, y.size))
        F, G = system.fg_batch(xc, Y, par=par, eps=0.0)
        res = np.empty(self._size())
        res[:2 * nc] = (dxc - T * F).ravel()
        res[2 * nc:2 * nc + 2] = X[-1] - X[0]
        row = 2 * nc + 2
        res[row] = self._phase_value(X, T)
        row += 1
        for con in self.constraints:
            res[row] = self._constraint_value(con, X, T, y, par, xc, Y, F, G,
                                              overrides=overrides)
            row += 1
        return res

    def _size(self):
        return 2 * self.disc.N * self.disc.m + 2 + 1 + len(self.constraints)

    def _phase_value(self, X, T):
        disc = self.disc
        if self.phase == PHASE_PIN:
            return X[0, 0] - self.phase_pin_value
        Xref, Tref = self.phase_ref
        dref = disc.derivs_at_colloc(Xref)
        xc = disc.states_at_colloc(X - Xref)
        return float(disc.wq @ np.sum(xc * dref, axis=1))

    def _constraint_value(self, con, X, T, y, par, xc=None, Y=None, F=None,
                          G=None, overrides=None):
        disc, system = self.disc, self.system
        if xc is None:
            xc = disc.states_at_colloc(X)
            Y = np.broadcast_to(y, (xc.shape[0], y.size))
        if con.kind == "trace":
            dxf, _ = numderiv.jac_x(system, xc, np.ascontiguousarray(Y), par)
            return float(disc.wq @ (dxf[:, 0, 0] + dxf[:, 1, 1]))
        if con.kind == "gbar":
            if G is None:
                _, G = system.fg_batch(xc, Y, par=par, eps=0.0)
            return float(disc.wq @ G[:, con.index])
        if con.kind == "arclength":
            u = self.pack(X, T, y, self._param_values(overrides or {}))
            du = (u - con.data["u_prev"]) * con.data["scale"]
            return float(du @ con.data["tangent"]) - con.data["ds"]
        raise ValueError(con.kind)

    def _param_values(self, overrides):
        return [float(overrides.get(f.name, self.system.defaults.get(f.name, 0.0)))
                for f in self.frees if f.kind == "param"]

    # -- Jacobian ---------------------------------------------------------------

    def jacobian(self, X, T, y, par, overrides):
        disc, system = self.disc, self.system
        N, m = disc.N, disc.m
        nc = N * m
        nn = disc.n_nodes
        size = self._size()
        J = np.zeros((size, size))

        xc = disc.states_at_colloc(X)
        Y = np.ascontiguousarray(np.broadcast_to(y, (nc, y.size)))
        F, G = system.fg_batch(xc, Y, par=par, eps=0.0)
        dxf, dxg = numderiv.jac_x(system, xc, Y, par)
        dyf, dyg = numderiv.jac_y(system, xc, Y, par)

        # collocation rows
        for i in range(N):
            for l in range(m):
                r = 2 * (i * m + l)
                c = i * m * 2
                A = -T * dxf[i * m + l]
                for j in range(m + 1):
                    blk = disc.L[l, j] * A
                    J[r, c + 2 * j] += disc.Ld[l, j] / disc.h[i] + blk[0, 0]
                    J[r, c + 2 * j + 1] += blk[0, 1]
                    J[r + 1, c + 2 * j] += blk[1, 0]
                    J[r + 1, c + 2 * j + 1] += disc.Ld[l, j] / disc.h[i] + blk[1, 1]

        # periodicity rows
        J[2 * nc, 0] = -1.0
        J[2 * nc + 1, 1] = -1.0
        J[2 * nc, 2 * (nn - 1)] = 1.0
        J[2 * nc + 1, 2 * (nn - 1) + 1] = 1.0

        # phase row
        rp = 2 * nc + 2
        if self.phase == PHASE_PIN:
            J[rp, 0] = 1.0
        else:
            Xref, Tref = self.phase_ref
            dref = disc.derivs_at_colloc(Xref)
            for i in range(N):
                for l in range(m):
                    w = disc.wq[i * m + l]
                    for j in range(m + 1):
                        cj = (i * m + j) * 2
                        J[rp, cj] += w * disc.L[l, j] * dref[i * m + l, 0]
                        J[rp, cj + 1] += w * disc.L[l, j] * dref[i * m + l, 1]

        # constraint rows (state part)
        row = rp + 1
        for con in self.constraints:
            if con.kind == "trace":
                grad = self._trace_grad_x(xc, Y, par)       # (nc, 2)
                self._accumulate_quad_row(J, row, grad)
            elif con.kind == "gbar":
                grad = dxg[:, con.index, :]
                self._accumulate_quad_row(J, row, grad)
            elif con.kind == "arclength":
                tan = con.data["tangent"] * con.data["scale"]
                J[row, :] = tan
            row += 1

        # free-unknown columns
        col = 2 * nn
        for fr in self.frees:
            if fr.kind == "T":
                J[:2 * nc, col] = (-F).ravel()
                # trace/gbar values are tau-integrals: no T dependence
            elif fr.kind == "y":
                J[:2 * nc, col] = (-T * dyf[:, :, fr.index]).ravel()
                row = rp + 1
                for con in self.constraints:
                    if con.kind == "trace":
                        J[row, col] += self._trace_dy(xc, Y, par, fr.index)
                    elif con.kind == "gbar":
                        J[row, col] += float(disc.wq @ dyg[:, con.index, fr.index])
                    row += 1
            elif fr.kind == "param":
                dF, dG, dtr = self._param_derivs(xc, Y, overrides, fr.name)
                J[:2 * nc, col] += (-T * dF).ravel()
                row = rp + 1
                for con in self.constraints:
                    if con.kind == "trace":
                        J[row, col] += dtr
                    elif con.kind == "gbar":
                        J[row, col] += float(disc.wq @ dG[:, con.index])
                    row += 1
            col += 1
        return J

    def _accumulate_quad_row(self, J, row, grad):
        disc = self.disc
        for i in range(disc.N):
            for l in range(disc.m):
                w = disc.wq[i * disc.m + l]
                for j in range(disc.m + 1):
                    cj = (i * disc.m + j) * 2
                    J[row, cj] += w * disc.L[l, j] * grad[i * disc.m + l, 0]
                    J[row, cj + 1] += w * disc.L[l, j] * grad[i * disc.m + l, 1]

    def _trace_grad_x(self, xc, Y, par, h=1e-5):
        grad = np.empty((xc.shape[0], 2))
        for j in range(2):
            hj = np.maximum(h, h * np.abs(xc[:, j]))
            Xp = xc.copy(); Xp[:, j] += hj
            Xm = xc.copy(); Xm[:, j] -= hj
            dp, _ = numderiv.jac_x(self.system, Xp, Y, par)
            dm, _ = numderiv.jac_x(self.system, Xm, Y, par)
            grad[:, j] = ((dp[:, 0, 0] + dp[:, 1, 1]) - (dm[:, 0, 0] + dm[:, 1, 1])) / (2 * hj)
        return grad

    def _trace_dy(self, xc, Y, par, j, h=1e-5):
        Yp = Y.copy(); Yp[:, j] += h
        Ym = Y.copy(); Ym[:, j] -= h
        dp, _ = numderiv.jac_x(self.system, xc, Yp, par)
        dm, _ = numderiv.jac_x(self.system, xc, Ym, par)
        tr_p = self.disc.wq @ (dp[:, 0, 0] + dp[:, 1, 1])
        tr_m = self.disc.wq @ (dm[:, 0, 0] + dm[:, 1, 1])
        return float((tr_p - tr_m) / (2 * h))

    def _param_derivs(self, xc, Y, overrides, name, rel=1e-6):
        base = float(overrides.get(name, self.system.defaults[name]))
        h = max(rel, rel * abs(base))
        ovp = dict(overrides); ovp[name] = base + h
        ovm = dict(overrides); ovm[name] = base - h
        par_p = self.system.pack_params(ovp)
        par_m = self.system.pack_params(ovm)
        Fp, Gp = self.system.fg_batch(xc, Y, par=par_p, eps=0.0)
        Fm, Gm = self.system.fg_batch(xc, Y, par=par_m, eps=0.0)
        dF = (Fp - Fm) / (2 * h)
        dG = (Gp - Gm) / (2 * h)
        dtr = 0.0
        if any(c.kind == "trace" for c in self.constraints):
            dp, _ = numderiv.jac_x(self.system, xc, Y, par_p)
            dm, _ = numderiv.jac_x(self.system, xc, Y, par_m)
            dtr = float(self.disc.wq @ ((dp[:, 0, 0] + dp[:, 1, 1])
                                        - (dm[:, 0, 0] + dm[:, 1, 1])) / (2 * h))
        return dF, dG, dtr

    # -- Newton ------------------------------------------------------------------

    def solve(self, X0, T0, y0, overrides0, tol=1e-10, required_tol=1e-8,
              max_iter=25, max_halvings=8, min_T=1e-6):
        from scipy.linalg import lu_factor, lu_solve

        X, T = X0.copy(), float(T0)
        y = np.asarray(y0, dtype=float).copy()
        overrides = dict(overrides0)
        par = self.system.pack_params(overrides)
        res = self.residual(X, T, y, par, overrides)
        rnorm = np.max(np.abs(res))
        for it in range(max_iter):
            if rnorm <= tol:
                break
            J = self.jacobian(X, T, y, par, overrides)
            try:
                lu = lu_factor(J)
                du = lu_solve(lu, -res)
            except Exception as exc:
                raise NewtonError(f"linear solve failed: {exc}", rnorm)
            lam = 1.0
            u = self.pack(X, T, y, self._param_values(overrides))
            for _ in range(max_halvings + 1):
                u_try = u + lam * du
                Xt, Tt, yt, ovt = self.unpack(u_try, y, overrides)
                part = self.system.pack_params(ovt)
                res_try = self.residual(Xt, Tt, yt, part, ovt)
                rn_try = np.max(np.abs(res_try))
                if np.isfinite(rn_try) and (rn_try < rnorm or rnorm < tol * 10):
                    break
                lam *= 0.5
            else:
                raise NewtonError(f"line search stalled at residual {rnorm:.3e}", rnorm)
            X, T, y, overrides = Xt, Tt, yt, ovt
            par = part
            res, rnorm = res_try, rn_try
            if T < min_T:
                raise DegenerateCycleError(f"period collapsed: T = {T:.3e}")
        if rnorm > required_tol:
            raise NewtonError(
                f"Newton did not converge: residual {rnorm:.3e} after {max_iter} iterations",
                rnorm)
        return X, T, y, overrides, rnorm
