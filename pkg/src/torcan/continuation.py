"""Pseudo-arclength continuation of constrained periodic boundary-value problems.

One bordered Newton system carries the collocation equations, periodicity,
phase condition, and any active integral constraints (trace = 0 for folds of
cycles, slow averages = 0 for toral folded singularities), plus the
arclength equation.  Each satisfied constraint frees one more unknown (slow
coordinate, then model parameters), following the staged procedure that
computes toral FSN II curves:

    (i)   locate a fold of cycles (trace constraint, slow coordinate free),
    (ii)  slide along the fold branch until g1_bar = 0,
    (iii) add g1_bar = 0 and free the first parameter until g2_bar = 0,
    (iv)  add g2_bar = 0, free the second parameter, and trace the curve.

For one slow variable the toral folded singularity is itself the FSN II and
stage (ii) collapses to {trace = 0, g_bar = 0} in two parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import averaging, cycles, numderiv
from .bvp import (Constraint, DegenerateCycleError, ExtendedBVP, Free,
                  NewtonError, PeriodicOrbit, PHASE_INTEGRAL)


class StageFailure(RuntimeError):
    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


@dataclass
class BranchPoint:
    orbit: PeriodicOrbit
    free_values: dict
    diagnostics: dict = field(default_factory=dict)
    arclength: float = 0.0

    @property
    def y(self):
        return self.orbit.y

    @property
    def T(self):
        return self.orbit.T


@dataclass
class Branch:
    constraints: list
    frees: list
    points: list = field(default_factory=list)
    end_reason: str = ""

    def __len__(self):
        return len(self.points)

    def values(self, key):
        return np.array([p.free_values[key] for p in self.points])

    def diag(self, key):
        return np.array([p.diagnostics.get(key, np.nan) for p in self.points])


def _free_key(fr):
    if fr.kind == "T":
        return "T"
    if fr.kind == "y":
        return f"y{fr.index}"
    return fr.name


def _pack_point(system, orbit, frees):
    vals = []
    for fr in frees:
        if fr.kind == "T":
            vals.append(orbit.T)
        elif fr.kind == "y":
            vals.append(orbit.y[fr.index])
        else:
            vals.append(float(orbit.overrides.get(fr.name, system.defaults[fr.name])))
    return np.concatenate([orbit.X.ravel(), vals])


def _scale_vector(disc, T, n_frees):
    nn = disc.n_nodes
    w = np.empty(2 * nn + n_frees)
    w[:2 * nn] = 1.0 / np.sqrt(2 * nn)
    w[2 * nn] = 1.0 / max(1.0, abs(T))
    w[2 * nn + 1:] = 1.0
    return w


def _diagnostics(system, orbit, want):
    out = {}
    if not want:
        return out
    co = averaging.averaged_coefficients(system, orbit)
    out["phi2"] = co.phi2
    out["rho0"] = co.rho0
    for j, gv in enumerate(co.g_bar):
        out[f"gbar{j}"] = float(gv)
    out["T"] = orbit.T
    out["coeffs"] = co
    return out


def correct_to_constraints(system, seed, constraints, frees, overrides=None,
                           tol=1e-10):
    """Newton-correct ``seed`` onto the constraint set (square system)."""
    if len(frees) != 1 + len(constraints):
        raise ValueError("corrector needs exactly one free unknown per "
                         "constraint plus T")
    ov = dict(overrides or seed.overrides)
    prob = ExtendedBVP(system, seed.disc, frees=frees, constraints=constraints,
                       phase=PHASE_INTEGRAL, phase_ref=(seed.X.copy(), seed.T))
    X, T, y, ov, rnorm = prob.solve(seed.X, seed.T, seed.y, ov, tol=tol)
    return PeriodicOrbit(system.name, seed.disc, X, T, y,
                         system.pack_params(ov), rnorm, ov)


def continue_with_constraints(system, seed, constraints, frees, stop=None,
                              step=0.02, step_min=1e-8, step_max=0.1,
                              max_points=400, diagnostics=True,
                              direction=1.0, seed_tangent_key=None):
    """Trace a one-dimensional solution branch of the constrained BVP.

    ``frees`` lists the released unknowns beyond the states (Free("T") first);
    there must be one more free than constraints.  ``stop(point) -> reason``
    may terminate the branch; the arclength equation is appended internally.
    Returns a Branch whose points carry re-verified orbits and diagnostics.
    """
    frees = list(frees)
    if len(frees) != 2 + len(constraints):
        raise ValueError("branch tracing needs one surplus free unknown")
    disc = seed.disc
    key0 = seed_tangent_key or _free_key(frees[-1])
    frees_square = [f for f in frees if _free_key(f) != key0]
    orb = correct_to_constraints(system, seed, constraints, frees_square)
    branch = Branch(constraints=[c.kind for c in constraints],
                    frees=[_free_key(f) for f in frees])

    def record(o, s):
        fv = {_free_key(f): (o.T if f.kind == "T" else
                             (o.y[f.index] if f.kind == "y" else
                              float(o.overrides.get(f.name, system.defaults[f.name]))))
              for f in frees}
        pt = BranchPoint(orbit=o, free_values=fv,
                         diagnostics=_diagnostics(system, o, diagnostics),
                         arclength=s)
        branch.points.append(pt)
        return pt

    record(orb, 0.0)
    if stop:
        reason = stop(branch.points[-1])
        if reason:
            branch.end_reason = reason
            return branch

    n_frees = len(frees)
    u_prev = _pack_point(system, orb, frees)
    w = _scale_vector(disc, orb.T, n_frees)
    tangent = np.zeros_like(u_prev)
    # initial tangent: along the newly released unknown
    for i, f in enumerate(frees):
        if _free_key(f) == key0:
            tangent[2 * disc.n_nodes + i] = np.sign(direction) or 1.0
    ds = step
    s_accum = 0.0

    while len(branch) < max_points:
        u_pred = u_prev + ds * tangent / np.maximum(w, 1e-300)
        nn = disc.n_nodes
        Xp = u_pred[:2 * nn].reshape(nn, 2)
        yp = orb.y.copy()
        ovp = dict(orb.overrides)
        Tp = orb.T
        for val, fr in zip(u_pred[2 * nn:], frees):
            if fr.kind == "T":
                Tp = val
            elif fr.kind == "y":
                yp[fr.index] = val
            else:
                ovp[fr.name] = val

        con = Constraint("arclength", data={
            "u_prev": u_prev, "tangent": tangent, "ds": ds, "scale": w})
        prob = ExtendedBVP(system, disc, frees=frees,
                           constraints=constraints + [con],
                           phase=PHASE_INTEGRAL, phase_ref=(orb.X.copy(), orb.T))
        # the arclength constraint consumes the +1 surplus: rebuild free list
        try:
            X, T, y, ov, rnorm = prob.solve(Xp, Tp, yp, ovp)
        except (NewtonError, DegenerateCycleError):
            if abs(ds) <= step_min:
                branch.end_reason = "corrector failure at minimum step"
                break
            ds *= 0.5
            continue

        new = PeriodicOrbit(system.name, disc, X, T, y,
                            system.pack_params(ov), rnorm, ov)
        s_accum += ds
        pt = record(new, s_accum)
        u_new = _pack_point(system, new, frees)
        dvec = (u_new - u_prev) * w
        nrm = np.linalg.norm(dvec)
        if nrm > 0:
            tangent = dvec / nrm
        u_prev = u_new
        orb = new
        w = _scale_vector(disc, orb.T, n_frees)
        if stop:
            reason = stop(pt)
            if reason:
                branch.end_reason = reason
                break
        ds = min(step_max, abs(ds) * 1.3)
    else:
        branch.end_reason = "max_points"
    if not branch.end_reason:
        branch.end_reason = "max_points"
    return branch


def _bracketed_stage_root(system, branch, diag_key, constraints, frees,
                          stage_name):
    """Find a sign change of a diagnostic along a branch and Newton-polish it
    by promoting the diagnostic to a constraint (square system)."""
    vals = branch.diag(diag_key)
    sgn = np.sign(vals)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(idx) == 0:
        raise StageFailure(stage_name,
                           f"{diag_key} does not change sign along the branch "
                           f"(range [{np.nanmin(vals):.3e}, {np.nanmax(vals):.3e}])")
    i = int(idx[0])
    guess = branch.points[i if abs(vals[i]) < abs(vals[i + 1]) else i + 1].orbit
    return correct_to_constraints(system, guess, constraints, frees)


def fold_branch(system, seed_fold, y_range=None, step=0.02, max_points=200,
                step_max=0.08, diagnostics=True):
    """Branch of folded cycles (SNPOs) for k = 2: trace = 0, both slow coords free."""
    if system.k_slow != 2:
        raise ValueError("fold_branch expects k = 2")
    orbit = getattr(seed_fold, "orbit", seed_fold)
    constraints = [Constraint("trace")]
    frees = [Free("T"), Free("y", 0), Free("y", 1)]

    def stop(pt):
        if y_range is None:
            return ""
        for j in range(2):
            lo, hi = y_range[j]
            yv = pt.orbit.y[j]
            if yv < lo or yv > hi:
                return "range boundary"
        return ""

    return continue_with_constraints(system, orbit, constraints, frees,
                                     stop=stop, step=step, step_max=step_max,
                                     max_points=max_points,
                                     diagnostics=diagnostics)


def fsn2_curve(system, seed_fold, two_params, param_ranges=None, step=0.02,
               max_points=120, fold_scan=None, diagnostics=True,
               scan_step=0.02, scan_points=200, direction=1.0):
    """Toral FSN II curve in two parameters for a k = 2 system (staged).

    ``seed_fold`` is a folded cycle at the base parameter set.  Stages: slide
    along folds to g1_bar = 0, free two_params[0] to reach g2_bar = 0, then
    trace the curve freeing two_params[1].  Each stage target is bracketed
    along its branch and polished by a square Newton solve.
    """
    mu1, mu2 = two_params
    orbit = getattr(seed_fold, "orbit", seed_fold)

    # stage ii: fold branch until g1_bar changes sign
    br = fold_scan or fold_branch(system, orbit, step=scan_step,
                                  max_points=scan_points, diagnostics=True)
    orb2 = _bracketed_stage_root(
        system, br, "gbar0",
        [Constraint("trace"), Constraint("gbar", 0)],
        [Free("T"), Free("y", 0), Free("y", 1)], "stage-ii: gbar1=0 on folds")

    # stage iii: free mu1 until g2_bar = 0
    con3 = [Constraint("trace"), Constraint("gbar", 0)]
    frees3 = [Free("T"), Free("y", 0), Free("y", 1), Free("param", name=mu1)]
    found = {}

    def stop3(pt):
        g2 = pt.diagnostics.get("gbar1", np.nan)
        if "prev" in found and np.sign(g2) * np.sign(found["prev"]) < 0:
            return "gbar2 bracketed"
        found["prev"] = g2
        return ""

    stage_budget = max(150, max_points)
    br3a = continue_with_constraints(system, orb2, con3, frees3, stop=stop3,
                                     step=step, max_points=stage_budget,
                                     diagnostics=True, direction=1.0)
    if br3a.end_reason != "gbar2 bracketed":
        found.clear()
        br3b = continue_with_constraints(system, orb2, con3, frees3, stop=stop3,
                                         step=step, max_points=stage_budget,
                                         diagnostics=True, direction=-1.0)
        if br3b.end_reason != "gbar2 bracketed":
            raise StageFailure("stage-iii: gbar2=0",
                               f"not bracketed in either direction along {mu1}")
        br3 = br3b
    else:
        br3 = br3a
    orb_fsn = _bracketed_stage_root(
        system, br3, "gbar1",
        [Constraint("trace"), Constraint("gbar", 0), Constraint("gbar", 1)],
        frees3, "stage-iii polish")

    # stage iv: trace the FSN II curve freeing mu2
    con4 = [Constraint("trace"), Constraint("gbar", 0), Constraint("gbar", 1)]
    frees4 = frees3 + [Free("param", name=mu2)]

    def stop4(pt):
        if param_ranges is None:
            return ""
        for name, rng in zip((mu1, mu2), param_ranges):
            if rng is None:
                continue
            v = pt.free_values[name]
            if v < rng[0] or v > rng[1]:
                return "range boundary"
        return ""

    return continue_with_constraints(system, orb_fsn, con4, frees4, stop=stop4,
                                     step=step, max_points=max_points,
                                     diagnostics=diagnostics,
                                     direction=direction)


def tfs_curve_one_slow(system, seed_fold, two_params, param_ranges=None,
                       step=0.02, max_points=150, direction=1.0,
                       diagnostics=True):
    """Locus of the k = 1 toral folded singularity (= toral FSN II) in two
    parameters: {trace = 0, g_bar = 0} freeing (y, T, mu1, mu2)."""
    if system.k_slow != 1:
        raise ValueError("tfs_curve_one_slow expects k = 1")
    mu1, mu2 = two_params
    orbit = getattr(seed_fold, "orbit", seed_fold)

    # correct onto {trace, gbar} freeing mu1 first
    con = [Constraint("trace"), Constraint("gbar", 0)]
    frees3 = [Free("T"), Free("y", 0), Free("param", name=mu1)]
    orb0 = correct_to_constraints(system, orbit, con, frees3)

    frees4 = frees3 + [Free("param", name=mu2)]

    def stop(pt):
        if param_ranges is None:
            return ""
        for name, rng in zip((mu1, mu2), param_ranges):
            if rng is None:
                continue
            v = pt.free_values[name]
            if v < rng[0] or v > rng[1]:
                return "range boundary"
        return ""

    return continue_with_constraints(system, orb0, con, frees4, stop=stop,
                                     step=step, max_points=max_points,
                                     diagnostics=diagnostics,
                                     direction=direction,
                                     seed_tangent_key=mu2)
