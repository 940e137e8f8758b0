"""High-level workflows tying cycles, averaging, continuation and detection.

These are the recipes behind the CLI subcommands and the acceptance runs:
bootstrap a folded cycle for a registered model, trace its fold branch,
detect and classify toral folded singularities, sweep classifications over a
model parameter, and locate classification boundaries (toral FSN II and the
node/focus transition).
"""
from __future__ import annotations

import numpy as np

from . import averaging, continuation, cycles, singularities
from .bvp import Constraint, Free
from .continuation import correct_to_constraints, fold_branch


def seed_fold(system, overrides=None):
    """Bootstrap a folded cycle from the model's fold hint (settle + continue)."""
    hint = system.fold_hint
    if hint is None:
        raise ValueError(f"{system.name}: no fold hint registered")
    orb = cycles.orbit_from_simulation(
        system, hint["y0"], overrides=overrides, x0=np.array(hint["x0"]),
        settle=hint["settle"], N=hint.get("N"))
    fam = cycles.continue_cycle_family(
        system, orb, hint["free_index"], hint["range"], step=hint["step"],
        direction=hint["direction"], max_points=400)
    return cycles.find_fold_of_cycles(system, fam)


def fold_branch_for(system, overrides=None, fold=None, max_points=220,
                    step=0.02, step_max=0.05, margin=0.02):
    """Two-sided fold branch inside the domain box (k = 2)."""
    fold = fold or seed_fold(system, overrides)
    k = system.k_slow
    lo = system.domain_lo[2:2 + k]
    hi = system.domain_hi[2:2 + k]
    span = hi - lo
    y_range = [(lo[j] + margin * span[j], hi[j] - margin * span[j]) for j in range(k)]
    br = fold_branch(system, fold.orbit, y_range=y_range, step=step,
                     step_max=step_max, max_points=max_points)
    br2 = fold_branch(system, fold.orbit, y_range=y_range, step=-step,
                      step_max=step_max, max_points=max_points)
    pts = list(reversed(br2.points[1:])) + br.points
    br.points = pts
    return br


def find_tfs(system, overrides=None, tol=1e-9, branch=None, extended=False):
    """Toral folded singularities of a k = 2 model at the given parameters."""
    if system.k_slow != 2:
        raise ValueError("find_tfs expects k = 2; use tfs_parameter_k1 for k = 1")
    if branch is None:
        fold = seed_fold(system, overrides)
        branch = fold_branch_for(system, overrides, fold=fold)
    return singularities.find_toral_folded_singularities(
        system, branch, tol=tol, extended=extended)


def tfs_parameter_k1(system, param, overrides=None, fold=None):
    """k = 1: parameter value where the averaged slow drift vanishes (g_bar = 0).

    In one slow dimension the toral folded singularity is (generically) a
    toral FSN II; this returns the folded cycle, its coefficients at the
    singular parameter value, and that value.
    """
    from .explosion import explosion_locus

    fold = fold or seed_fold(system, overrides)
    if overrides:
        orb = cycles.solve_folded_cycle(system, fold.orbit, free_index=0,
                                        overrides=overrides)
    else:
        orb = fold.orbit
    pred = explosion_locus(system, param, 0.0, orb)
    ov = dict(overrides or {})
    ov[param] = pred.tfs_value
    orb2 = cycles.solve_folded_cycle(system, orb, free_index=0, overrides=ov)
    co = averaging.averaged_coefficients(system, orb2, extended=True)
    return {"param": param, "value": pred.tfs_value, "orbit": orb2,
            "coeffs": co, "ad_product": float(co.a_bar[0] * co.d_bar[0])}


def classify_at(system, overrides=None, tol=1e-9, branch=None):
    """First toral folded singularity at the given parameters, classified."""
    found = find_tfs(system, overrides, tol=tol, branch=branch)
    if not found:
        raise RuntimeError("no toral folded singularity found on the fold branch")
    return found[0]


def taxonomy_sweep(system, param, values, overrides=None, tol=1e-9):
    """Classify the TFS at each parameter value (warm-started fold branches)."""
    out = []
    fold = seed_fold(system, overrides)
    warm = fold.orbit
    for v in values:
        ov = dict(overrides or {})
        ov[param] = float(v)
        fold_v = cycles.solve_folded_cycle(system, warm, free_index=0,
                                           overrides=ov)
        warm = fold_v
        branch = fold_branch_for(system, ov, fold=cycles.FoldedCycle(
            orbit=fold_v, phi2=0.0, multiplier_second=1.0))
        try:
            ts = classify_at(system, ov, tol=tol, branch=branch)
        except RuntimeError:
            ts = None
        out.append((float(v), ts))
    return out


def fsn2_boundary(system, param, overrides=None, seed_ts=None):
    """Parameter value of the toral FSN II: {trace, g1_bar, g2_bar} = 0.

    Solved as one square bordered Newton system freeing (T, y1, y2, param),
    seeded from a detected TFS nearby.
    """
    if seed_ts is None:
        seed_ts = classify_at(system, overrides)
    orb = seed_ts.folded_cycle
    cons = [Constraint("trace"), Constraint("gbar", 0), Constraint("gbar", 1)]
    frees = [Free("T"), Free("y", 0), Free("y", 1), Free("param", name=param)]
    sol = correct_to_constraints(system, orb, cons, frees,
                                 overrides=dict(overrides or orb.overrides))
    return float(sol.overrides[param]), sol


def focus_boundary(system, param, bracket, overrides=None, tol=1e-6):
    """Parameter value where the TFS eigenvalues become complex (node/focus)."""
    branch_cache = {}

    def disc(v):
        ov = dict(overrides or {})
        ov[param] = float(v)
        ts = classify_at(system, ov)
        J = singularities.desingularized_jacobian(ts.coeffs)
        return float(np.trace(J) ** 2 - 4 * np.linalg.det(J))

    lo, hi = bracket
    flo, fhi = disc(lo), disc(hi)
    if flo * fhi > 0:
        raise RuntimeError(
            f"discriminant does not change sign on [{lo}, {hi}]: "
            f"({flo:.3g}, {fhi:.3g})")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fm = disc(mid)
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def mu_of_parameter(system, param, values, overrides=None):
    """Eigenvalue ratio of the TFS along a parameter grid (None when not a node)."""
    out = []
    for v, ts in taxonomy_sweep(system, param, values, overrides):
        out.append((v, None if ts is None else ts.mu))
    return out
