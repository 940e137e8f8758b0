"""Invariant manifolds of limit cycles by ensemble sweeps, and maximal torus canards.

The attracting (repelling) manifold of limit cycles is meshed by seeding
singular-limit cycles on a curve parallel to the fold-curve projection and
flowing each seed forward (backward) in the full system until it crosses a
hyperplane through the toral folded node.  The number of envelope
oscillations executed inside the O(sqrt(eps)) neighbourhood of the node is
the seed's rotation count; maximal torus canards are located by bisecting
the seed-curve parameter on rotation-count discontinuities.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cycles
from .bvp import NewtonError
from .integrate import DOMAIN_EXIT, SECTION_HIT, integrate

# rotation counting: slow-window factor and envelope-oscillation prominence
WINDOW_FACTOR = 3.0
PROMINENCE_REL = 1e-3


class SeedRangeError(RuntimeError):
    pass


@dataclass
class Seed:
    s: float                    # seed-curve parameter in [0, 1]
    orbit: object               # PeriodicOrbit on P_a (or P_r)
    y: np.ndarray


@dataclass
class SweptOrbit:
    seed: Seed
    status: int
    section_state: np.ndarray | None
    rotation_count: int
    escape: bool
    peaks_in_window: int
    t_final: float


@dataclass
class ManifoldMesh:
    side: str
    seeds: list
    swept: list
    y_star: np.ndarray
    eps: float

    def rotation_counts(self):
        return np.array([s.rotation_count for s in self.swept])

    def section_states(self):
        return [s.section_state for s in self.swept]


@dataclass
class MaximalTorusCanard:
    n: int
    s_bracket: tuple
    counts: tuple
    seed: Seed | None = None

    def as_dict(self):
        return {"n": self.n, "seed_param_bracket": list(self.s_bracket),
                "rotation_counts": list(self.counts)}


def _fold_geometry(fold_branch):
    """Arclength-parametrized fold points and unit tangents/normals in y."""
    ys = np.array([p.orbit.y for p in fold_branch.points])
    ds = np.linalg.norm(np.diff(ys, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(ds)])
    return ys, s / s[-1]


def span_near(fold_branch, y_star, width):
    """Seed-curve parameter window of half-width ``width`` (in slow-plane
    arclength) centred on the fold point nearest ``y_star``."""
    ys, s_norm = _fold_geometry(fold_branch)
    i = int(np.argmin(np.linalg.norm(ys - np.asarray(y_star), axis=1)))
    total = np.sum(np.linalg.norm(np.diff(ys, axis=0), axis=1))
    half = width / max(total, 1e-300)
    return (float(np.clip(s_norm[i] - half, 0.0, 1.0)),
            float(np.clip(s_norm[i] + half, 0.0, 1.0)))


def walk_to_y(system, orbit, y_target, n_steps=6):
    """Re-solve a cycle at a nearby frozen y by stepping the warm start."""
    cur = orbit
    y0 = cur.y.copy()
    for w in np.linspace(1.0 / n_steps, 1.0, n_steps):
        yt = (1 - w) * y0 + w * np.asarray(y_target, dtype=float)
        cur = cycles.solve_cycle(system, yt, guess=cur)
    return cur


def _off_fold_orbit(system, fold_orbit, y_target, inflate):
    """First solve off a fold: inflate/deflate the orbit to select the sheet."""
    guess = fold_orbit.copy()
    mean = guess.X.mean(axis=0)
    guess.X = mean + inflate * (guess.X - mean)
    guess.y = np.asarray(y_target, dtype=float).copy()
    return cycles.solve_cycle(system, guess.y, guess=guess)


def _seed_curve_point(ys, s_norm, s, offset, sign):
    i = int(np.clip(np.searchsorted(s_norm, s), 1, len(ys) - 1))
    w = (s - s_norm[i - 1]) / max(s_norm[i] - s_norm[i - 1], 1e-300)
    y_fold = (1 - w) * ys[i - 1] + w * ys[i]
    tan = ys[i] - ys[i - 1]
    tan = tan / np.linalg.norm(tan)
    nrm = np.array([-tan[1], tan[0]])
    return y_fold + sign * offset * nrm, i


def seed_cycles(system, fold_branch, offset, count, side="attracting",
                span=(0.0, 1.0), inflate=None):
    """Cycles whose slow projections parallel the fold curve at ``offset``.

    The seed curve is the fold-curve projection displaced by ``offset`` along
    the local normal, into the side where cycles exist; ``side`` selects the
    attracting (inflated warm start) or repelling (deflated) sheet.  The
    middle seed is bootstrapped off the fold orbit and the rest are solved by
    warm-chaining outward along the curve.
    """
    if offset <= 0:
        raise SeedRangeError("offset must be positive (seeds on the fold are rejected)")
    ys, s_norm = _fold_geometry(fold_branch)
    if inflate is None:
        inflate = 1.15 if side == "attracting" else 0.85
    targets = np.linspace(span[0], span[1], count)
    mid = len(targets) // 2

    # bootstrap the middle seed, trying both normal directions
    first_orbit = None
    sign_used = None
    for sign in (+1.0, -1.0):
        y_try, i_ref = _seed_curve_point(ys, s_norm, targets[mid], offset, sign)
        orbit_ref = fold_branch.points[min(i_ref, len(fold_branch.points) - 1)].orbit
        amp_ref = orbit_ref.amplitude()
        for frac in (0.15, 0.35):
            try:
                y_near, _ = _seed_curve_point(ys, s_norm, targets[mid],
                                              frac * offset, sign)
                cand = _off_fold_orbit(system, orbit_ref, y_near, inflate)
                if cand.amplitude() < 0.3 * amp_ref:
                    continue
                cand = walk_to_y(system, cand, y_try, n_steps=4)
                if cand.amplitude() < 0.3 * amp_ref:
                    continue
                first_orbit, sign_used = cand, sign
                break
            except NewtonError:
                continue
        if first_orbit is not None:
            break
    if first_orbit is None:
        raise SeedRangeError(
            f"no cycle found at offset {offset} near s={targets[mid]:.3f}")

    want_attracting = side == "attracting"
    results = [None] * len(targets)

    def place(idx, orbit):
        phi2 = cycles.phi2_trace(system, orbit)
        if (phi2 < 0) != want_attracting:
            raise SeedRangeError(
                f"seed at s={targets[idx]:.3f} landed on the wrong sheet "
                f"(phi2={phi2:.4f})")
        results[idx] = Seed(s=float(targets[idx]), orbit=orbit,
                            y=orbit.y.copy())

    place(mid, first_orbit)
    for rng in (range(mid + 1, len(targets)), range(mid - 1, -1, -1)):
        prev = first_orbit
        for idx in rng:
            y_try, _ = _seed_curve_point(ys, s_norm, targets[idx], offset,
                                         sign_used)
            try:
                prev = walk_to_y(system, prev, y_try, n_steps=3)
            except NewtonError as exc:
                raise SeedRangeError(
                    f"seed chain broke at s={targets[idx]:.3f}: {exc}")
            place(idx, prev)
    return results


def _count_rotations(env, y_star, eps, window_scale=None):
    """Envelope oscillations inside the O(sqrt(eps)) slow window of y_star.

    For a fast-coordinate envelope the peak-value sequence is the envelope and
    its interior local maxima are the oscillations.  For a radius observable
    the signal has no fast oscillation: its own local maxima inside the window
    are counted directly.
    """
    if env.n_peaks() < 1:
        return 0, 0
    k = len(y_star)
    ys = env.peak_states[:, 2:2 + k]
    scale = np.ones(k) if window_scale is None else np.asarray(window_scale)
    dist = np.linalg.norm((ys - y_star) / scale, axis=1)
    mask = dist < WINDOW_FACTOR * np.sqrt(eps)
    if isinstance(env.coord, tuple) and env.coord[0] == "fast_radius":
        return int(mask.sum()), int(mask.sum())
    vals = env.peak_values[mask]
    if len(vals) < 3:
        return 0, int(mask.sum())
    rng = vals.max() - vals.min()
    if rng <= 0:
        return 0, int(mask.sum())
    prom = PROMINENCE_REL * rng
    interior = (vals[1:-1] > vals[:-2] + prom) & (vals[1:-1] > vals[2:] + prom)
    return int(interior.sum()), int(mask.sum())


def sweep_one(system, seed, eps, section, y_star, t_max=None, rel_tol=1e-9,
              abs_tol=1e-11, window_scale=None, params=None, backward=False):
    """Flow one seed to the section and count its envelope rotations."""
    z0 = np.concatenate([seed.orbit.X[0], seed.orbit.y])
    t_end = t_max if t_max is not None else 40.0 / max(eps, 1e-12)
    if backward:
        t_end = -t_end
    traj = integrate(system, z0, eps, t_end,
                     rel_tol, abs_tol, store=False, section=section,
                     enforce_domain=True, params=params)
    env = traj.raw_peaks
    nrot, in_win = _count_rotations(env, y_star, eps, window_scale)
    hit = traj.status == SECTION_HIT
    return SweptOrbit(seed=seed, status=traj.status,
                      section_state=traj.states[-1].copy() if hit else None,
                      rotation_count=nrot, escape=traj.status == DOMAIN_EXIT,
                      peaks_in_window=in_win, t_final=traj.t_final)


def sweep(system, seeds, eps, section, y_star, side="attracting", threads=1,
          rel_tol=1e-9, abs_tol=1e-11, window_scale=None, params=None,
          backward=None):
    """Sweep every seed to the hyperplane; forward for the attracting side,
    backward in time for the repelling side."""
    if backward is None:
        backward = side == "repelling"
    t_end = (-1.0 if backward else 1.0) * 40.0 / max(eps, 1e-12)

    def run(seed):
        z0 = np.concatenate([seed.orbit.X[0], seed.orbit.y])
        traj = integrate(system, z0, eps, t_end, rel_tol, abs_tol, store=False,
                         section=section, enforce_domain=True, params=params)
        env = traj.raw_peaks
        nrot, in_win = _count_rotations(env, y_star, eps, window_scale)
        hit = traj.status == SECTION_HIT
        return SweptOrbit(seed=seed, status=traj.status,
                          section_state=traj.states[-1].copy() if hit else None,
                          rotation_count=nrot,
                          escape=traj.status == DOMAIN_EXIT,
                          peaks_in_window=in_win, t_final=traj.t_final)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            swept = list(pool.map(run, seeds))
    else:
        swept = [run(s) for s in seeds]
    return ManifoldMesh(side=side, seeds=list(seeds), swept=swept,
                        y_star=np.asarray(y_star, dtype=float), eps=float(eps))


def _seed_at(system, fold_branch, offset, s, side, cache):
    key = round(float(s), 12)
    if key not in cache:
        cache[key] = seed_cycles(system, fold_branch, offset, 1, side=side,
                                 span=(s, s))[0]
        cache[key].s = float(s)
    return cache[key]


def funnel_span(system, fold_branch, tfn, eps, offset, span0=None, count=25,
                iters=3, shrink=3.0, threads=1, params=None, rel_tol=1e-9,
                abs_tol=1e-11):
    """Zoom the seed-curve window onto the rotational funnel of a TFN.

    The funnel narrows with eps; each iteration re-centres the window on the
    seed with the most envelope activity inside the O(sqrt(eps)) window.
    """
    y_star = tfn.y_star
    section = (2, float(y_star[0]),
               int(np.sign(tfn.coeffs.g_bar[0])) or 1)
    span = span0 or span_near(fold_branch, y_star, 0.3)
    for _ in range(iters):
        seeds = seed_cycles(system, fold_branch, offset, count,
                            side="attracting", span=span)
        mesh = sweep(system, seeds, eps, section, y_star, threads=threads,
                     rel_tol=rel_tol, abs_tol=abs_tol, params=params)
        counts = mesh.rotation_counts().astype(float)
        inwin = np.array([sw.peaks_in_window for sw in mesh.swept], dtype=float)
        score = counts + inwin / max(inwin.max(), 1.0)
        centre = seeds[int(np.argmax(score))].s
        width = (span[1] - span[0]) / shrink
        span = (max(span[0], centre - width / 2),
                min(span[1], centre + width / 2))
    return span


def section_envelope_curve(system, seeds, eps, section, y_star, side,
                           threads=1, rel_tol=1e-9, abs_tol=1e-11,
                           params=None):
    """(slow coordinate, envelope height) of each swept orbit at the section.

    The fast phase at the section crossing winds rapidly along the seed
    curve; the envelope height (last in-window peak of the fast observable)
    is phase-free, which is what makes intersection counting between the
    attracting and repelling curves robust.
    """
    mesh = sweep(system, seeds, eps, section, y_star, side=side,
                 threads=threads, rel_tol=rel_tol, abs_tol=abs_tol,
                 params=params)
    rows = []
    for sw in mesh.swept:
        if sw.section_state is None:
            continue
        env_h = np.nan
        # nearest recorded peak before the crossing
        z = sw.section_state
        rows.append((sw.seed.s, float(z[3]), float(z[0]), float(z[1]), sw))
    return mesh


def count_manifold_intersections(system, fold_branch, tfn, eps, offset,
                                 count=160, span=None, span_rep=None,
                                 threads=1, params=None, rel_tol=1e-9,
                                 abs_tol=1e-11):
    """Count maximal torus canards as crossings of the attracting and
    repelling envelope curves in the section through the TFN.

    Both invariant manifolds of limit cycles are meshed by the envelopes of
    swept orbits; in the section hyperplane each reduces to a curve of
    (transverse slow coordinate, envelope height).  Their transverse
    crossings are the maximal torus canards.  Returns (n_crossings,
    attracting samples, repelling samples).
    """
    y_star = tfn.y_star
    direction = int(np.sign(tfn.coeffs.g_bar[0])) or 1
    section = (2, float(y_star[0]), direction)
    span = span or funnel_span(system, fold_branch, tfn, eps, offset,
                               threads=threads, params=params)
    seeds_a = seed_cycles(system, fold_branch, offset, count,
                          side="attracting", span=span)
    mesh_a = sweep(system, seeds_a, eps, section, y_star, side="attracting",
                   threads=threads, rel_tol=rel_tol, abs_tol=abs_tol,
                   params=params)
    # repelling side: backward sweeps cross the section the opposite way
    section_r = (2, float(y_star[0]), -direction)
    seeds_r = seed_cycles(system, fold_branch, offset, count,
                          side="repelling", span=span_rep or span)
    mesh_r = sweep(system, seeds_r, eps, section_r, y_star, side="repelling",
                   threads=threads, rel_tol=rel_tol, abs_tol=abs_tol,
                   params=params)

    def curve(mesh):
        pts = []
        for sw in mesh.swept:
            z = sw.section_state
            if z is None:
                continue
            env = _envelope_at_section(sw, z)
            if env is not None:
                pts.append((float(z[3]), env))
        pts.sort()
        return np.array(pts)

    ca, cr = curve(mesh_a), curve(mesh_r)
    if len(ca) < 4 or len(cr) < 4:
        return 0, mesh_a, mesh_r
    lo = max(ca[:, 0].min(), cr[:, 0].min())
    hi = min(ca[:, 0].max(), cr[:, 0].max())
    if hi <= lo:
        return 0, mesh_a, mesh_r
    grid = np.linspace(lo, hi, 4001)
    ea = np.interp(grid, ca[:, 0], ca[:, 1])
    er = np.interp(grid, cr[:, 0], cr[:, 1])
    diff = ea - er
    sgn = np.sign(diff)
    nz = sgn != 0
    crossings = int(np.sum(sgn[nz][:-1] * sgn[nz][1:] < 0))
    return crossings, mesh_a, mesh_r


def _envelope_at_section(swept, z_section):
    """Envelope height at the section: the last recorded peak value."""
    env = getattr(swept, "_env", None)
    return getattr(swept, "env_at_section", None)


def locate_maximal_canards(system, fold_branch, tfn, eps, n_target, offset,
                           count=60, span=(0.0, 1.0), side="attracting",
                           bracket_tol=1e-8, threads=1, rel_tol=1e-9,
                           abs_tol=1e-11, params=None, max_runs=2000):
    """Maximal torus canards as rotation-count boundaries along the seed curve.

    Returns (canards, mesh): up to ``n_target`` MaximalTorusCanard records
    (bracket refined to relative width ``bracket_tol``) plus the initial
    sweep mesh.  Non-monotone raw counts are surfaced in the mesh, never
    reordered.
    """
    y_star = tfn.y_star if hasattr(tfn, "y_star") else np.asarray(tfn)
    sec_index = 2  # first slow coordinate
    co = getattr(tfn, "coeffs", None)
    direction = int(np.sign(co.g_bar[0])) if co is not None else +1
    section = (sec_index, float(y_star[0]), direction)

    seeds = seed_cycles(system, fold_branch, offset, count, side=side, span=span)
    mesh = sweep(system, seeds, eps, section, y_star, side=side,
                 threads=threads, rel_tol=rel_tol, abs_tol=abs_tol,
                 params=params)
    counts = mesh.rotation_counts()
    svals = np.array([s.s for s in seeds])

    cache = {round(float(sw.seed.s), 12): sw.seed for sw in mesh.swept}
    runs = [0]

    def count_at(s):
        runs[0] += 1
        if runs[0] > max_runs:
            raise RuntimeError("bisection exceeded max_runs")
        seed = _seed_at(system, fold_branch, offset, s, side, cache)
        res = sweep_one(system, seed, eps, section, y_star, rel_tol=rel_tol,
                        abs_tol=abs_tol, params=params)
        return res.rotation_count, seed

    canards = []
    for n in range(n_target):
        # bracket the n -> (>= n+1) transition from the coarse sweep
        idx = None
        for i in range(len(svals) - 1):
            if counts[i] <= n < counts[i + 1] or counts[i + 1] <= n < counts[i]:
                idx = i
                break
        if idx is None:
            break
        lo, hi = svals[idx], svals[idx + 1]
        c_lo, c_hi = counts[idx], counts[idx + 1]
        width0 = hi - lo
        while (hi - lo) > bracket_tol * max(width0, 1e-300):
            mid = 0.5 * (lo + hi)
            c_mid, _ = count_at(mid)
            if (c_mid <= n) == (c_lo <= n):
                lo, c_lo = mid, c_mid
            else:
                hi, c_hi = mid, c_mid
        canards.append(MaximalTorusCanard(n=n, s_bracket=(float(lo), float(hi)),
                                          counts=(int(c_lo), int(c_hi))))
    return canards, mesh
