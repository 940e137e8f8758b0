"""Limit cycles of the layer problem: solving, Floquet analysis, families, folds.

A cycle is found either from a warm start or by settling the layer flow onto
an attractor and fitting the last period.  Stability is quantified by the
nontrivial Floquet exponent phi2, computed two independent ways (trace-
integral quadrature on the collocation mesh, and the nontrivial monodromy
multiplier from integrating the variational equation); their agreement is a
discretization check used throughout the test suite.  Families are continued
in one slow coordinate by secant-predictor pseudo-arclength steps, which
carries them around folds of cycles (SNPOs), and folds are then polished by a
direct Newton solve on the trace-constrained boundary-value system.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numderiv
from .bvp import (Constraint, DegenerateCycleError, Discretization, ExtendedBVP,
                  Free, NewtonError, PeriodicOrbit, PHASE_INTEGRAL, PHASE_PIN)
from .integrate import integrate


class NoFoldError(RuntimeError):
    pass


class ComplexMultiplierError(RuntimeError):
    """Nontrivial multiplier not positive real: log of the exponent ill-defined."""


class Assumption3Error(RuntimeError):
    """Cycle passes too close to an equilibrium of the layer flow."""


def _disc_for(system, N=None, m=None):
    N0, m0 = system.mesh_hint
    return Discretization(N or N0, m or m0)


def orbit_from_simulation(system, y, overrides=None, x0=None, settle=None,
                          N=None, m=None, eps_settle=0.0):
    """Settle the layer flow onto an attracting cycle and fit the last period."""
    if x0 is None or settle is None:
        if system.cycle_seed is None:
            raise ValueError(f"{system.name}: no cycle seed hint; provide x0/settle")
        (x0_hint, _), settle_hint = system.cycle_seed
        x0 = x0_hint if x0 is None else np.asarray(x0, dtype=float)
        settle = settle_hint if settle is None else settle
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z0 = np.concatenate([np.asarray(x0, dtype=float), y])
    traj = integrate(system, z0, eps_settle, settle, 1e-11, 1e-13,
                     params=overrides, envelope_coord=0)
    pk = traj.raw_peaks.peak_times
    if len(pk) < 4:
        raise NewtonError("layer flow did not settle onto an oscillation "
                          f"(only {len(pk)} peaks)")
    gaps = np.diff(pk[-4:])
    T0 = float(gaps[-1])
    if np.max(np.abs(gaps - T0)) > 0.05 * T0:
        T0 = float(np.mean(gaps))
    disc = _disc_for(system, N, m)
    t_start = pk[-1] - T0
    X0 = traj.interpolate(t_start + disc.node_tau * T0)
    X0 = np.atleast_2d(X0)[:, :2].copy()
    return solve_cycle(system, y, guess=(X0, T0, disc), overrides=overrides)


def solve_cycle(system, y, guess, overrides=None, phase=PHASE_INTEGRAL,
                phase_pin_value=None, tol=1e-10):
    """Newton-solve the periodic BVP at frozen slow coordinates ``y``.

    ``guess`` is a PeriodicOrbit (warm start, possibly at nearby y) or a
    tuple (X0, T0, disc) of nodal states, period and discretization.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    overrides = dict(overrides or {})
    if isinstance(guess, PeriodicOrbit):
        X0, T0, disc = guess.X.copy(), guess.T, guess.disc
    else:
        X0, T0, disc = guess
    if phase == PHASE_PIN and phase_pin_value is None:
        phase_pin_value = float(X0[0, 0])
    prob = ExtendedBVP(system, disc, frees=[Free("T")], constraints=[],
                       phase=phase, phase_ref=(X0.copy(), T0),
                       phase_pin_value=phase_pin_value or 0.0)
    X, T, y_out, ov, rnorm = prob.solve(X0, T0, y, overrides, tol=tol)
    return PeriodicOrbit(system.name, disc, X, T, y_out,
                         system.pack_params(ov), rnorm, ov)


# -- Floquet ---------------------------------------------------------------------


@dataclass
class FloquetResult:
    phi1: float
    phi2: float            # trace-integral value (the paper's test function)
    phi2_monodromy: float
    m_trivial: float
    m_second: float

    def agreement(self):
        return abs(self.phi2 - self.phi2_monodromy) / max(1.0, abs(self.phi2))


def phi2_trace(system, orbit):
    """(1/T) int_0^T tr D_x f dt, evaluated by collocation quadrature."""
    disc = orbit.disc
    xc = disc.states_at_colloc(orbit.X)
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (xc.shape[0], orbit.y.size)))
    dxf, _ = numderiv.jac_x(system, xc, Y, orbit.par)
    return float(disc.wq @ (dxf[:, 0, 0] + dxf[:, 1, 1]))


def _fine_interp_matrix(disc, per_interval):
    key = ("fine", per_interval)
    cache = getattr(disc, "_interp_cache", None)
    if cache is None:
        cache = disc._interp_cache = {}
    if key not in cache:
        from .bvp import _lagrange_matrices
        s = np.arange(per_interval + 1) / per_interval
        Lf, _ = _lagrange_matrices(disc.m, disc.sub, s)
        cache[key] = Lf
    return cache[key]


def monodromy(system, orbit, per_interval=16):
    """Monodromy matrix by RK4 on the variational equation V' = T Dxf(G(tau)) V."""
    disc = orbit.disc
    Lf = _fine_interp_matrix(disc, 2 * per_interval)
    # sample states on a fine grid: 2*per_interval sub-steps per interval
    n_sub = 2 * per_interval
    states = np.empty((disc.N * n_sub + 1, 2))
    for i in range(disc.N):
        Xi = orbit.X[disc.interval_nodes(i)]
        states[i * n_sub:(i + 1) * n_sub + 1] = Lf @ Xi
    Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (states.shape[0], orbit.y.size)))
    A, _ = numderiv.jac_x(system, np.ascontiguousarray(states), Y, orbit.par)
    A = orbit.T * A
    V = np.eye(2)
    for i in range(disc.N):
        h = disc.h[i] / per_interval
        for s in range(per_interval):
            base = i * n_sub + 2 * s
            A0, Ah, A1 = A[base], A[base + 1], A[base + 2]
            k1 = A0 @ V
            k2 = Ah @ (V + 0.5 * h * k1)
            k3 = Ah @ (V + 0.5 * h * k2)
            k4 = A1 @ (V + h * k3)
            V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return V


def floquet_exponents(system, orbit, per_interval=16):
    """Trivial and nontrivial Floquet exponents with the dual-route phi2.

    The trivial multiplier is extracted with the known eigenvector f(Gamma(0))
    (robust even when both multipliers are near 1 at a fold); the second
    multiplier comes from the determinant, m2 = det(V) / m_trivial.
    """
    V = monodromy(system, orbit, per_interval)
    f0, _ = system.fg(orbit.X[0], orbit.y, par=orbit.par, eps=0.0)
    nf0 = np.linalg.norm(f0)
    if nf0 < 1e-10:
        raise Assumption3Error("vanishing speed at the phase anchor")
    v0 = f0 / nf0
    m_triv = float(v0 @ (V @ v0))
    resid = np.linalg.norm(V @ v0 - m_triv * v0)
    m2 = float(np.linalg.det(V) / m_triv)
    if m2 <= 0.0:
        raise ComplexMultiplierError(
            f"nontrivial multiplier {m2:.3e} not positive (period-doubled structure?)")
    phi2_mono = float(np.log(m2) / orbit.T)
    phi1 = float(np.log(abs(m_triv)) / orbit.T)
    res = FloquetResult(phi1=phi1, phi2=phi2_trace(system, orbit),
                        phi2_monodromy=phi2_mono, m_trivial=m_triv, m_second=m2)
    res.eigvec_residual = resid
    return res


# -- families and folds ------------------------------------------------------------


@dataclass
class CycleFamily:
    system: object
    free_index: int
    orbits: list = field(default_factory=list)
    phi2s: list = field(default_factory=list)
    end_reason: str = ""

    def append(self, orbit, phi2):
        self.orbits.append(orbit)
        self.phi2s.append(phi2)

    @property
    def y_free(self):
        return np.array([o.y[self.free_index] for o in self.orbits])

    def __len__(self):
        return len(self.orbits)


def _scale_vector(disc, T):
    nn = disc.n_nodes
    w = np.empty(2 * nn + 2)
    w[:2 * nn] = 1.0 / np.sqrt(2 * nn)
    w[2 * nn] = 1.0 / max(1.0, abs(T))
    w[2 * nn + 1] = 1.0
    return w


def continue_cycle_family(system, orbit, free_index, y_range, step=0.02,
                          step_min=1e-8, step_max=None, max_points=400,
                          T_max=1e6, amp_min=None, direction=None):
    """Pseudo-arclength continuation of a cycle family in one slow coordinate.

    The branch is carried around folds; each accepted member is re-converged
    to the collocation tolerance and tagged with its Floquet exponent phi2.
    """
    step_max = step_max or max(4 * step, 0.05)
    lo, hi = min(y_range), max(y_range)
    amp_min = amp_min if amp_min is not None else 1e-3 * float(
        np.max(system.domain_hi[:2] - system.domain_lo[:2]))

    fam = CycleFamily(system.name, free_index)
    orb = orbit.copy()
    fam.append(orb, phi2_trace(system, orb))

    disc = orb.disc
    y0v = orb.y[free_index]
    if direction is None:
        direction = 1.0 if (hi - y0v) >= (y0v - lo) else -1.0

    def pack(o):
        return np.concatenate([o.X.ravel(), [o.T, o.y[free_index]]])

    u_prev = pack(orb)
    w = _scale_vector(disc, orb.T)
    tangent = np.zeros_like(u_prev)
    tangent[-1] = direction
    ds = step

    while len(fam) < max_points:
        u_pred = u_prev + ds * tangent / np.maximum(w, 1e-300)
        nn = disc.n_nodes
        Xp = u_pred[:2 * nn].reshape(nn, 2)
        Tp = u_pred[2 * nn]
        yp = orb.y.copy()
        yp[free_index] = u_pred[2 * nn + 1]

        con = Constraint("arclength", data={
            "u_prev": u_prev, "tangent": tangent, "ds": ds, "scale": w})
        prob = ExtendedBVP(system, disc,
                           frees=[Free("T"), Free("y", free_index)],
                           constraints=[con], phase=PHASE_INTEGRAL,
                           phase_ref=(orb.X.copy(), orb.T))
        try:
            X, T, y, ov, rnorm = prob.solve(Xp, Tp, yp, orb.overrides)
        except (NewtonError, DegenerateCycleError):
            if abs(ds) <= step_min:
                fam.end_reason = "corrector failure at minimum step"
                break
            ds *= 0.5
            continue

        new = PeriodicOrbit(system.name, disc, X, T, y,
                            system.pack_params(ov), rnorm, ov)
        if new.amplitude() < amp_min:
            # a sudden collapse from a healthy amplitude is Newton falling
            # onto a trivial/equilibrium solution, not a genuine Hopf end
            if orb.amplitude() > 10 * amp_min and abs(ds) > step_min:
                ds *= 0.25
                continue
            fam.end_reason = "amplitude collapsed (Hopf end)"
            break
        if T > T_max:
            fam.end_reason = "period exceeded T_max (homoclinic guard)"
            break
        fam.append(new, phi2_trace(system, new))
        u_new = pack(new)
        dvec = (u_new - u_prev) * w
        nrm = np.linalg.norm(dvec)
        if nrm > 0:
            tangent = dvec / nrm
        u_prev = u_new
        orb = new
        w = _scale_vector(disc, orb.T)
        yv = new.y[free_index]
        if yv < lo - 1e-12 or yv > hi + 1e-12:
            fam.end_reason = "range boundary"
            break
        ds = min(step_max, ds * 1.3)
    else:
        fam.end_reason = "max_points"
    if not fam.end_reason:
        fam.end_reason = fam.end_reason or "max_points"
    return fam


def solve_folded_cycle(system, orbit_guess, free_index, overrides=None):
    """Direct Newton solve for an SNPO: BVP + trace constraint, y_free released."""
    orb = orbit_guess
    prob = ExtendedBVP(system, orb.disc,
                       frees=[Free("T"), Free("y", free_index)],
                       constraints=[Constraint("trace")],
                       phase=PHASE_INTEGRAL, phase_ref=(orb.X.copy(), orb.T))
    X, T, y, ov, rnorm = prob.solve(orb.X, orb.T, orb.y,
                                    dict(overrides or orb.overrides))
    return PeriodicOrbit(system.name, orb.disc, X, T, y,
                         system.pack_params(ov), rnorm, ov)


@dataclass
class FoldedCycle:
    orbit: PeriodicOrbit
    phi2: float
    multiplier_second: float

    @property
    def y(self):
        return self.orbit.y


def find_fold_of_cycles(system, family, fold_tol=1e-8, mult_tol=1e-6):
    """Locate the SNPO bracketed by a phi2 sign change along a family."""
    ph = np.asarray(family.phi2s)
    sgn = np.sign(ph)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(idx) == 0:
        raise NoFoldError("family does not bracket a sign change of phi2")
    i = int(idx[0])
    guess = family.orbits[i] if abs(ph[i]) < abs(ph[i + 1]) else family.orbits[i + 1]
    orb = solve_folded_cycle(system, guess, family.free_index)
    fl = floquet_exponents(system, orb)
    if abs(fl.phi2 * orb.T) > fold_tol:
        raise NoFoldError(f"fold polish left |phi2*T| = {abs(fl.phi2 * orb.T):.2e}")
    if abs(fl.m_second - 1.0) > mult_tol:
        raise NoFoldError(
            f"multiplier certificate failed: m2 = {fl.m_second:.8f}")
    return FoldedCycle(orbit=orb, phi2=fl.phi2, multiplier_second=fl.m_second)


def refine_mesh(system, orbit, factor=2, folded=False, free_index=0):
    """Re-solve the orbit on a mesh with ``factor`` times as many intervals.

    Folded cycles must be resolved through the trace-constrained system (the
    plain periodic BVP is singular at a fold), selected with ``folded=True``.
    """
    disc2 = Discretization(orbit.disc.N * factor, orbit.disc.m)
    X0 = np.atleast_2d(orbit.eval(disc2.node_tau))
    guess = PeriodicOrbit(orbit.model, disc2, X0.copy(), orbit.T,
                          orbit.y.copy(), orbit.par.copy(), np.nan,
                          dict(orbit.overrides))
    if folded:
        return solve_folded_cycle(system, guess, free_index)
    return solve_cycle(system, orbit.y, guess=(X0, orbit.T, disc2),
                       overrides=orbit.overrides)
