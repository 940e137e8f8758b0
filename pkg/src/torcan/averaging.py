"""Averaged radial-slow coefficients on a limit cycle of the layer problem.

Implements the full coefficient algorithm on a collocation orbit: the moving
orthonormal frame (p, q), the fundamental solution Phi of the linear radial
flow, the auxiliary periodic functions alpha_j and beta that absorb the
fluctuating parts of the near-identity transformation, and all averaged
coefficients of the radial-slow normal form

    R' = a_bar . u + b_bar R^2 + c_bar . R u + [xi_bar R^3]
    u' = eps (g_bar + d_bar R + e_bar u + [eta_bar R^2]),

with the bracketed cubic/quadratic extensions available for k = 1.  The sign
convention q = (f2, -f1)/|f| reproduces the published fvdP coefficient table.

Every line integral uses the orbit's own collocation quadrature; alpha, beta
and Phi come from per-interval polynomial running integrals on the same mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numderiv
from .cycles import Assumption3Error

MIN_SPEED = 1e-10


@dataclass
class MovingFrame:
    tau: np.ndarray        # collocation points in [0,1]
    p: np.ndarray          # (nc, 2) unit tangents
    q: np.ndarray          # (nc, 2) unit normals, q = (f2, -f1)/|f|
    speed: np.ndarray      # (nc,) |f|


def moving_frame(system, orbit):
    """Unit tangent/normal frame along the cycle at the collocation points."""
    disc = orbit.disc
    xc = disc.states_at_colloc(orbit.X)
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (xc.shape[0], orbit.y.size)))
    F, _ = system.fg_batch(xc, Y, par=orbit.par, eps=0.0)
    speed = np.linalg.norm(F, axis=1)
    if speed.min() < MIN_SPEED:
        raise Assumption3Error(
            f"speed {speed.min():.2e} below {MIN_SPEED}: equilibrium on the cycle")
    p = F / speed[:, None]
    q = np.column_stack([F[:, 1], -F[:, 0]]) / speed[:, None]
    return MovingFrame(tau=disc.colloc_tau.copy(), p=p, q=q, speed=speed)


class ScalingError(RuntimeError):
    """Phi left the trustworthy range (cycle far from the fold misused)."""


def fundamental_solution(system, orbit, frame=None):
    """Phi(tau) with dPhi/dt = (tr Dxf - f.(Dxf)f/|f|^2) Phi, Phi(0) = 1.

    The second generator term is the exact time derivative of log|f|, so the
    solution factorizes as exp(T int tr) * |f(0)|/|f(tau)|; the speed ratio is
    evaluated exactly and only the trace is quadratured.  Direct quadrature of
    the full scalar generator serves as a consistency check (stored in the
    returned samples).  Returns (Phi at collocation points, Phi(1), generator
    samples).
    """
    disc = orbit.disc
    frame = frame or moving_frame(system, orbit)
    xc = disc.states_at_colloc(orbit.X)
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (xc.shape[0], orbit.y.size)))
    dxf, _ = numderiv.jac_x(system, xc, Y, orbit.par)
    tr = dxf[:, 0, 0] + dxf[:, 1, 1]
    fAf = np.einsum("ni,nij,nj->n", frame.p, dxf, frame.p)
    psi = tr - fAf
    B_col, B_mesh = disc.running_integral(tr)
    f0, _ = system.fg(orbit.X[0], orbit.y, par=orbit.par, eps=0.0)
    speed0 = np.linalg.norm(f0)
    Phi = np.exp(orbit.T * B_col) * speed0 / frame.speed
    Phi_end = np.exp(orbit.T * B_mesh[-1])   # speed ratio returns to 1 exactly
    if Phi.max() > 1e12 or Phi.min() < 1e-12:
        raise ScalingError(f"Phi range [{Phi.min():.2e}, {Phi.max():.2e}]")
    return Phi, float(Phi_end), psi


def closed_form_phi(system, orbit, frame=None):
    """Check values: Phi(tau) = exp(T int tr) * |f(0)| / |f(tau)| on a folded cycle."""
    disc = orbit.disc
    frame = frame or moving_frame(system, orbit)
    xc = disc.states_at_colloc(orbit.X)
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (xc.shape[0], orbit.y.size)))
    dxf, _ = numderiv.jac_x(system, xc, Y, orbit.par)
    tr = dxf[:, 0, 0] + dxf[:, 1, 1]
    A_col, _ = disc.running_integral(tr)
    f0, _ = system.fg(orbit.X[0], orbit.y, par=orbit.par, eps=0.0)
    return np.exp(orbit.T * A_col) * np.linalg.norm(f0) / frame.speed


@dataclass
class AveragedCoefficients:
    """All averaged coefficients of the radial-slow normal form on one cycle."""

    T: float
    a_bar: np.ndarray            # (k,)
    b_bar: float
    c_bar: np.ndarray            # (k,)
    d_bar: np.ndarray            # (k,)
    e_bar: np.ndarray            # (k, k)
    g_bar: np.ndarray            # (k,)
    phi2: float
    xi_bar: float | None = None
    eta_bar: float | None = None
    samples: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def rho0(self):
        return float(self.a_bar @ self.g_bar)

    def as_dict(self):
        out = {
            "T": self.T,
            "a_bar": self.a_bar.tolist(),
            "b_bar": self.b_bar,
            "c_bar": self.c_bar.tolist(),
            "d_bar": self.d_bar.tolist(),
            "e_bar": self.e_bar.tolist(),
            "g_bar": self.g_bar.tolist(),
            "rho0": self.rho0,
            "phi2": self.phi2,
        }
        if self.xi_bar is not None:
            out["xi_bar"] = self.xi_bar
        if self.eta_bar is not None:
            out["eta_bar"] = self.eta_bar
        return out


class AccuracyWarning(RuntimeError):
    pass


def averaged_coefficients(system, orbit, extended=False, keep_samples=False):
    """Compute every averaged coefficient of the normal form on ``orbit``.

    ``extended=True`` (k = 1 only) also computes the cubic radial coefficient
    xi_bar and the quadratic slow coefficient eta_bar.
    """
    k = system.k_slow
    if extended and k != 1:
        raise ValueError("extended coefficients are defined for k = 1 only")
    disc = orbit.disc
    T = orbit.T
    nc = disc.N * disc.m
    xc = np.ascontiguousarray(disc.states_at_colloc(orbit.X))
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (nc, k)))

    frame = moving_frame(system, orbit)
    q = frame.q
    Phi, Phi_end, psi = fundamental_solution(system, orbit, frame)

    dxf, dxg = numderiv.jac_x(system, xc, Y, orbit.par)
    dyf, dyg = numderiv.jac_y(system, xc, Y, orbit.par)
    _, G = system.fg_batch(xc, Y, par=orbit.par, eps=0.0)
    tr = dxf[:, 0, 0] + dxf[:, 1, 1]
    phi2 = float(disc.wq @ tr)

    # a_j = ((D_y f)^T q)_j / Phi
    a = np.einsum("nij,ni->nj", dyf, q) / Phi[:, None]
    a_bar = disc.quad(a)

    # b = (1/2) Phi q . (q.grad)^2 f
    dir2f = numderiv.dir2(system, xc, Y, q, orbit.par, component="f")
    b = 0.5 * Phi * np.einsum("ni,ni->n", q, dir2f)
    b_bar = float(disc.quad(b))

    # auxiliary periodic functions (zero initial data, mean-free integrands)
    alpha = np.empty((nc, k))
    alpha_end = np.empty(k)
    for j in range(k):
        col, mesh_vals = disc.running_integral(T * (a[:, j] - a_bar[j]))
        alpha[:, j] = col
        alpha_end[j] = mesh_vals[-1]
    beta, beta_mesh = disc.running_integral(T * (b - b_bar))
    beta_end = beta_mesh[-1]

    # c_j = (H^T q)_j + 2 alpha_j b - 2 beta a_bar_j
    H = numderiv.mixed_H(system, xc, Y, q, orbit.par)
    Hq = np.einsum("nij,ni->nj", H, q)
    c = Hq + 2.0 * alpha * b[:, None] - 2.0 * beta[:, None] * a_bar[None, :]
    c_bar = disc.quad(c)

    # d_j = Phi (grad_x g_j . q)
    d = Phi[:, None] * np.einsum("nji,ni->nj", dxg, q)
    d_bar = disc.quad(d)

    # e_ij = dg_i/dy_j + d_i alpha_j
    e = dyg + d[:, :, None] * alpha[:, None, :]
    e_bar = np.tensordot(disc.wq, e, axes=(0, 0))

    g_bar = disc.quad(G)

    xi_bar = eta_bar = None
    if extended:
        dir3f = numderiv.dir3_f(system, xc, Y, q, orbit.par)
        xi = (1.0 / 6.0) * np.einsum("ni,ni->n", q, dir3f) * Phi * Phi
        xi_bar = float(disc.quad(xi))
        dir2g = numderiv.dir2(system, xc, Y, q, orbit.par, component="g")
        eta = 0.5 * dir2g[:, 0] * Phi * Phi + beta * d[:, 0]
        eta_bar = float(disc.quad(eta))

    checks = {
        "phi_end_minus_1": Phi_end - 1.0,
        "alpha_periodicity": float(np.max(np.abs(alpha_end))),
        "beta_periodicity": float(abs(beta_end)),
    }
    samples = {}
    if keep_samples:
        samples = {"tau": disc.colloc_tau.copy(), "Phi": Phi, "alpha": alpha,
                   "beta": beta, "a": a, "b": b, "c": c, "d": d,
                   "psi": psi, "q": q, "p": frame.p, "H": H}
    return AveragedCoefficients(
        T=T, a_bar=a_bar, b_bar=b_bar, c_bar=c_bar, d_bar=d_bar,
        e_bar=e_bar, g_bar=g_bar, phi2=phi2, xi_bar=xi_bar, eta_bar=eta_bar,
        samples=samples, checks=checks)


def rho0(system, folded_cycle):
    """Tangency test a_bar . g_bar at a folded cycle (0 at a toral folded singularity)."""
    orbit = getattr(folded_cycle, "orbit", folded_cycle)
    coeffs = averaged_coefficients(system, orbit)
    return coeffs.rho0
