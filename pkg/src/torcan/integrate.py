"""Adaptive time integration with dense output, events and envelopes.

One Dormand-Prince 5(4) stepper (FSAL, quartic dense output) serves the full
system (eps > 0), the layer problem (eps = 0, slow block frozen) and backward
time.  The hot loop is numba-compiled per model and releases the GIL, so
independent trajectories can run on a thread pool; every extremum of the
designated envelope observable and every hyperplane crossing is located on
the dense output inside the loop, which keeps manifold sweeps from having to
store multi-million-step trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

# -- Dormand-Prince 5(4) tableau and dense-output matrix ----------------------

_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]

_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])

_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# Status codes returned by the core loop.
DONE = 0
SECTION_HIT = 1
DOMAIN_EXIT = 2
STEP_UNDERFLOW = 3
MAX_STEPS = 4
TRAJ_FULL = 5
PEAKS_FULL = 6
NONFINITE = 7

OBS_NONE = -1
OBS_COORD = 0
OBS_RADIUS = 1


class StiffnessError(RuntimeError):
    def __init__(self, msg, t, state):
        super().__init__(msg)
        self.t, self.state = t, state


class SectionTimeout(RuntimeError):
    def __init__(self, msg, t, state):
        super().__init__(msg)
        self.t, self.state = t, state


@njit(nogil=True, inline="always")
def _dense_eval(z_old, K, h, theta, out):
    th = theta
    th2 = th * th
    th3 = th2 * th
    th4 = th3 * th
    for i in range(z_old.shape[0]):
        acc = 0.0
        for j in range(7):
            acc += K[j, i] * (_P[j, 0] * th + _P[j, 1] * th2
                              + _P[j, 2] * th3 + _P[j, 3] * th4)
        out[i] = z_old[i] + h * acc


@njit(nogil=True, inline="always")
def _obs_value(z, kind, idx):
    if kind == OBS_RADIUS:
        return np.sqrt(z[0] * z[0] + z[1] * z[1])
    return z[idx]


@njit(nogil=True, inline="always")
def _obs_deriv(z, dz, kind, idx):
    if kind == OBS_RADIUS:
        r = np.sqrt(z[0] * z[0] + z[1] * z[1])
        if r == 0.0:
            return 0.0
        return (z[0] * dz[0] + z[1] * dz[1]) / r
    return dz[idx]


def make_core(full_rhs):
    """Compile the stepper around a model's in-place full right-hand side."""

    @njit(nogil=True)
    def obs_deriv_at(z_old, K, h, theta, par, eps, kind, idx, ztmp, dtmp):
        _dense_eval(z_old, K, h, theta, ztmp)
        full_rhs(ztmp, par, eps, dtmp)
        return _obs_deriv(ztmp, dtmp, kind, idx)

    @njit(nogil=True)
    def core(par, eps, t0, z0, t_end, rtol, atol, h_init,
             store, obs_kind, obs_idx,
             sec_idx, sec_level, sec_dir,
             dom_lo, dom_hi, use_domain, max_steps,
             traj_t, traj_z, traj_K, traj_h, pk_t, pk_z, pk_kind,
             zf):
        n = z0.shape[0]
        direction = 1.0 if t_end >= t0 else -1.0
        t = t0
        z = z0.copy()
        K = np.empty((7, n))
        znew = np.empty(n)
        ztmp = np.empty(n)
        dtmp = np.empty(n)

        full_rhs(z, par, eps, K[0])

        # initial step size (Hairer-style d0/d1 heuristic)
        h = h_init
        if h == 0.0:
            d0 = 0.0
            d1 = 0.0
            for i in range(n):
                s = atol + rtol * abs(z[i])
                d0 += (z[i] / s) ** 2
                d1 += (K[0, i] / s) ** 2
            d0 = np.sqrt(d0 / n)
            d1 = np.sqrt(d1 / n)
            span = abs(t_end - t0)
            if d0 < 1e-5 or d1 < 1e-5:
                h = 1e-6 * max(span, 1.0)
            else:
                h = 0.01 * d0 / d1
            if span > 0 and h > 0.1 * span:
                h = 0.1 * span
        h *= direction

        obs_d_left = _obs_deriv(z, K[0], obs_kind, obs_idx)
        sec_s_left = z[sec_idx] - sec_level if sec_idx >= 0 else 0.0

        n_traj = 0
        n_pk = 0
        nsteps = 0
        status = DONE

        while True:
            if direction * (t - t_end) >= 0.0:
                status = DONE
                break
            if nsteps >= max_steps:
                status = MAX_STEPS
                break
            # clip to the end point
            if direction * (t + h - t_end) > 0.0:
                h = t_end - t
            if abs(h) < 16.0 * 2.22e-16 * max(abs(t), 1.0):
                status = STEP_UNDERFLOW
                break

            # stages 2..7 (stage 7 lands on z_new: FSAL)
            for s in range(1, 7):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += _A[s, j] * K[j, i]
                    ztmp[i] = z[i] + h * acc
                if s < 6:
                    full_rhs(ztmp, par, eps, K[s])
                else:
                    for i in range(n):
                        znew[i] = ztmp[i]
                    full_rhs(znew, par, eps, K[6])

            err = 0.0
            ok = True
            for i in range(n):
                e = 0.0
                for j in range(7):
                    e += _E[j] * K[j, i]
                e *= h
                sc = atol + rtol * max(abs(z[i]), abs(znew[i]))
                err += (e / sc) ** 2
                if not np.isfinite(znew[i]):
                    ok = False
            err = np.sqrt(err / n)

            if not ok:
                h *= 0.25
                continue
            if err > 1.0:
                fac = max(0.2, 0.9 * err ** -0.2)
                h *= fac
                continue

            nsteps += 1
            t_new = t + h
            theta_stop = 1.0
            hit_section = False

            # section crossing inside this step
            if sec_idx >= 0:
                s_right = znew[sec_idx] - sec_level
                crossed = (sec_s_left < 0.0 and s_right >= 0.0) or \
                          (sec_s_left > 0.0 and s_right <= 0.0)
                if crossed:
                    upward = s_right > sec_s_left
                    if sec_dir == 0 or (sec_dir > 0 and upward) or (sec_dir < 0 and not upward):
                        a, b = 0.0, 1.0
                        sa = sec_s_left
                        for _ in range(100):
                            m = 0.5 * (a + b)
                            _dense_eval(z, K, h, m, ztmp)
                            sm = ztmp[sec_idx] - sec_level
                            if abs(sm) <= 1e-10 and (b - a) * abs(h) < 1e-10 * max(abs(t_new), 1.0):
                                break
                            if (sa < 0.0) == (sm < 0.0):
                                a = m
                                sa = sm
                            else:
                                b = m
                        theta_stop = 0.5 * (a + b)
                        _dense_eval(z, K, h, theta_stop, ztmp)
                        hit_section = True
                sec_s_left = s_right

            # envelope extrema inside this step (before any section stop)
            if obs_kind != OBS_NONE:
                d_right = _obs_deriv(znew, K[6], obs_kind, obs_idx)
                if (obs_d_left > 0.0 and d_right < 0.0) or (obs_d_left < 0.0 and d_right > 0.0):
                    a, b = 0.0, 1.0
                    da = obs_d_left
                    for _ in range(80):
                        if (b - a) * abs(h) < 1e-11 * max(abs(t_new), 1.0):
                            break
                        m = 0.5 * (a + b)
                        dm = obs_deriv_at(z, K, h, m, par, eps, obs_kind, obs_idx, ztmp, dtmp)
                        if (da < 0.0) == (dm < 0.0):
                            a = m
                            da = dm
                        else:
                            b = m
                    th = 0.5 * (a + b)
                    if th <= theta_stop:
                        if n_pk >= pk_t.shape[0]:
                            status = PEAKS_FULL
                            break
                        _dense_eval(z, K, h, th, dtmp)
                        pk_t[n_pk] = t + th * h
                        for i in range(n):
                            pk_z[n_pk, i] = dtmp[i]
                        pk_kind[n_pk] = -1 if obs_d_left < 0.0 else 1
                        n_pk += 1
                obs_d_left = d_right

            if status == PEAKS_FULL:
                break

            # store the accepted step
            if store == 1:
                if n_traj >= traj_t.shape[0]:
                    status = TRAJ_FULL
                    break
                traj_t[n_traj] = t_new
                traj_h[n_traj] = h
                for i in range(n):
                    traj_z[n_traj, i] = znew[i]
                for j in range(7):
                    for i in range(n):
                        traj_K[n_traj, j, i] = K[j, i]
                n_traj += 1

            if hit_section:
                _dense_eval(z, K, h, theta_stop, ztmp)
                t = t + theta_stop * h
                for i in range(n):
                    z[i] = ztmp[i]
                if store == 1 and n_traj > 0:
                    traj_t[n_traj - 1] = t
                    for i in range(n):
                        traj_z[n_traj - 1, i] = z[i]
                status = SECTION_HIT
                break

            t = t_new
            for i in range(n):
                z[i] = znew[i]
                K[0, i] = K[6, i]

            if use_domain == 1:
                for i in range(n):
                    if z[i] < dom_lo[i] or z[i] > dom_hi[i]:
                        status = DOMAIN_EXIT
                        break
                if status == DOMAIN_EXIT:
                    break

            # step-size growth
            if err == 0.0:
                fac = 10.0
            else:
                fac = min(10.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac

        for i in range(n):
            zf[i] = z[i]
        return status, n_traj, n_pk, t, h, nsteps

    return core


def get_core(system):
    core = getattr(system, "_integrator_core", None)
    if core is None:
        core = make_core(system.full_rhs)
        system._integrator_core = core
    return core


# -- result containers ---------------------------------------------------------


@dataclass
class Envelope:
    """Extrema of one observable along a trajectory (peaks and troughs)."""

    coord: object
    peak_times: np.ndarray
    peak_values: np.ndarray
    peak_states: np.ndarray
    trough_times: np.ndarray
    trough_values: np.ndarray
    trough_states: np.ndarray

    def n_peaks(self):
        return len(self.peak_times)


class EmptyEnvelopeError(RuntimeError):
    """Trajectory carried fewer than 3 extrema of the requested coordinate."""


@dataclass
class Trajectory:
    """Dense-output trajectory: states at accepted steps plus interpolants."""

    times: np.ndarray            # (m+1,) node times, strictly monotone
    states: np.ndarray           # (m+1, dim)
    K: np.ndarray                # (m, 7, dim) stage values per step
    step_h: np.ndarray           # (m,) full step sizes used for dense output
    status: int
    nsteps: int
    rtol: float
    atol: float
    eps: float
    raw_peaks: Envelope | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t0(self):
        return self.times[0]

    @property
    def t_final(self):
        return self.times[-1]

    def interpolate(self, t):
        """Continuous state at time(s) t via the per-step quartic interpolant."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sgn = 1.0 if self.times[-1] >= self.times[0] else -1.0
        tt = sgn * self.times
        out = np.empty((t.size, self.states.shape[1]))
        idx = np.searchsorted(tt, sgn * t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 2)
        for row, (ti, i) in enumerate(zip(t, idx)):
            h = self.step_h[i]
            theta = (ti - self.times[i]) / h
            th = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
            out[row] = self.states[i] + h * (self.K[i].T @ (_P @ th))
        return out if out.shape[0] > 1 else out[0]

    def observable(self, obs):
        kind, idx = obs
        if kind == "fast_radius":
            return np.hypot(self.states[:, 0], self.states[:, 1])
        return self.states[:, idx]


def _obs_code(system, coord):
    if coord == "none" or coord is False:
        return OBS_NONE, -1
    if coord is None:
        kind, idx = system.envelope_obs
    elif coord == "fast_radius":
        kind, idx = "fast_radius", -1
    else:
        kind, idx = "coord", int(coord)
    return (OBS_RADIUS, -1) if kind == "fast_radius" else (OBS_COORD, idx)


def integrate(system, init, eps, t_end, rel_tol=1e-9, abs_tol=1e-11, *,
              t0=0.0, params=None, store=True, envelope_coord=None,
              section=None, max_steps=200_000_000, enforce_domain=False,
              h0=0.0, traj_chunk=120_000, peak_chunk=65_536,
              max_peaks=5_000_000):
    """Integrate the full (or layer, eps=0) system from ``init`` to ``t_end``.

    Returns a Trajectory; extrema of the envelope observable are recorded on
    the fly, and an optional hyperplane ``section=(coord, level, direction)``
    terminates the run on its first valid crossing.  Backward time is
    requested with t_end < t0.
    """
    if not (1e-14 <= rel_tol <= 1e-3 and 1e-14 <= abs_tol <= 1e-3):
        raise ValueError("tolerances must lie in [1e-14, 1e-3]")
    par = system.pack_params(params) if not isinstance(params, np.ndarray) else params
    z = np.array(init, dtype=float).copy()
    if z.shape != (2 + system.k_slow,):
        raise ValueError(f"init must have shape ({2 + system.k_slow},)")

    obs_kind, obs_idx = _obs_code(system, envelope_coord)
    if section is None:
        sec_idx, sec_level, sec_dir = -1, 0.0, 0
    else:
        sec_idx, sec_level, sec_dir = int(section[0]), float(section[1]), int(section[2])
        if abs(z[sec_idx] - sec_level) <= 1e-10:
            raise ValueError("initial state lies on the section")

    core = get_core(system)
    store_flag = 1 if store else 0

    t_nodes = [np.array([t0])]
    z_nodes = [z.reshape(1, -1).copy()]
    K_parts, h_parts = [], []
    pk_t_parts, pk_z_parts, pk_k_parts = [], [], []

    t_cur, z_cur, h_cur = t0, z, h0
    status = DONE
    nsteps_total = 0
    total_peaks = 0
    while True:
        traj_t = np.empty(traj_chunk if store else 1)
        traj_z = np.empty((traj_chunk if store else 1, z.size))
        traj_K = np.empty((traj_chunk if store else 1, 7, z.size))
        traj_h = np.empty(traj_chunk if store else 1)
        pk_t = np.empty(peak_chunk)
        pk_z = np.empty((peak_chunk, z.size))
        pk_kind = np.empty(peak_chunk, dtype=np.int64)
        zf = np.empty_like(z)

        status, n_traj, n_pk, t_cur, h_cur, nsteps = core(
            par, float(eps), t_cur, z_cur, float(t_end), rel_tol, abs_tol, h_cur,
            store_flag, obs_kind, obs_idx, sec_idx, sec_level, sec_dir,
            system.domain_lo, system.domain_hi, 1 if enforce_domain else 0,
            max_steps - nsteps_total,
            traj_t, traj_z, traj_K, traj_h, pk_t, pk_z, pk_kind, zf)
        nsteps_total += nsteps
        z_cur = zf
        if store and n_traj:
            t_nodes.append(traj_t[:n_traj].copy())
            z_nodes.append(traj_z[:n_traj].copy())
            K_parts.append(traj_K[:n_traj].copy())
            h_parts.append(traj_h[:n_traj].copy())
        if n_pk:
            pk_t_parts.append(pk_t[:n_pk].copy())
            pk_z_parts.append(pk_z[:n_pk].copy())
            pk_k_parts.append(pk_kind[:n_pk].copy())
            total_peaks += n_pk
        if status in (TRAJ_FULL, PEAKS_FULL) and total_peaks < max_peaks:
            continue
        break

    if store:
        times = np.concatenate(t_nodes)
        states = np.vstack(z_nodes)
        K = np.vstack(K_parts) if K_parts else np.empty((0, 7, z.size))
        step_h = np.concatenate(h_parts) if h_parts else np.empty(0)
    else:
        times = np.array([t0, t_cur])
        states = np.vstack([np.array(init, dtype=float), z_cur])
        K = np.empty((0, 7, z.size))
        step_h = np.diff(times)

    if pk_t_parts:
        pt = np.concatenate(pk_t_parts)
        pz = np.vstack(pk_z_parts)
        pk = np.concatenate(pk_k_parts)
    else:
        pt = np.empty(0)
        pz = np.empty((0, z.size))
        pk = np.empty(0, dtype=np.int64)
    obs_name = ("fast_radius", -1) if obs_kind == OBS_RADIUS else ("coord", obs_idx)
    raw = _split_envelope(pt, pz, pk, (obs_kind, obs_idx), obs_name)

    traj = Trajectory(times=times, states=states, K=K, step_h=step_h,
                      status=status, nsteps=nsteps_total, rtol=rel_tol,
                      atol=abs_tol, eps=float(eps), raw_peaks=raw,
                      meta={"model": system.name, "t_end_requested": float(t_end)})
    if status == STEP_UNDERFLOW:
        raise StiffnessError(
            f"step-size underflow at t={t_cur:.6g} (stiffness failure)",
            t_cur, z_cur)
    return traj


def _obs_of_states(states, code):
    kind, idx = code
    if kind == OBS_RADIUS:
        return np.hypot(states[:, 0], states[:, 1])
    return states[:, idx]


def _split_envelope(pt, pz, pkind, code, coord_name):
    vals = _obs_of_states(pz, code) if len(pt) else np.empty(0)
    is_peak = pkind == 1
    return Envelope(
        coord=coord_name,
        peak_times=pt[is_peak], peak_values=vals[is_peak], peak_states=pz[is_peak],
        trough_times=pt[~is_peak], trough_values=vals[~is_peak], trough_states=pz[~is_peak],
    )


def envelope(traj, coord=None, system=None):
    """Envelope of one coordinate from a stored trajectory's dense output.

    Extrema are located by sign changes of the interpolated derivative and
    polished to 1e-10 in time.  ``coord`` is a coordinate index or
    "fast_radius"; with ``coord=None`` the recorded in-loop envelope is
    returned directly when available.
    """
    if coord is None and traj.raw_peaks is not None and traj.raw_peaks.n_peaks() >= 1:
        return traj.raw_peaks
    if coord is None:
        raise ValueError("no recorded envelope; pass an explicit coordinate")
    code = (OBS_RADIUS, -1) if coord == "fast_radius" else (OBS_COORD, int(coord))
    if traj.K.shape[0] == 0:
        raise EmptyEnvelopeError("trajectory carries no dense output")

    kind, idx = code
    m = traj.K.shape[0]
    pt, pz, pkind = [], [], []
    P = _P

    def deriv_at(i, theta):
        w = np.array([1.0, 2 * theta, 3 * theta ** 2, 4 * theta ** 3])
        dz = traj.K[i].T @ (P @ w)      # dz/dtheta / h = dz/dt
        if kind == OBS_RADIUS:
            w2 = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
            z = traj.states[i] + traj.step_h[i] * (traj.K[i].T @ (P @ w2))
            r = np.hypot(z[0], z[1])
            return (z[0] * dz[0] + z[1] * dz[1]) / max(r, 1e-300)
        return dz[idx]

    def state_at(i, theta):
        w2 = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
        return traj.states[i] + traj.step_h[i] * (traj.K[i].T @ (P @ w2))

    d_left = deriv_at(0, 0.0)
    for i in range(m):
        theta_hi = (traj.times[i + 1] - traj.times[i]) / traj.step_h[i]
        d_right = deriv_at(i, theta_hi)
        if (d_left > 0 and d_right < 0) or (d_left < 0 and d_right > 0):
            a, b, da = 0.0, theta_hi, d_left
            for _ in range(80):
                if (b - a) * abs(traj.step_h[i]) < 1e-11 * max(1.0, abs(traj.times[i + 1])):
                    break
                mid = 0.5 * (a + b)
                dm = deriv_at(i, mid)
                if (da < 0) == (dm < 0):
                    a, da = mid, dm
                else:
                    b = mid
            th = 0.5 * (a + b)
            z = state_at(i, th)
            pt.append(traj.times[i] + th * traj.step_h[i])
            pz.append(z)
            pkind.append(1 if d_left > 0 else -1)
        d_left = d_right

    if len(pt) < 3:
        raise EmptyEnvelopeError(
            f"only {len(pt)} extrema of the requested coordinate")
    pt = np.asarray(pt)
    pz = np.asarray(pz)
    pkind = np.asarray(pkind, dtype=np.int64)
    name = ("fast_radius", -1) if kind == OBS_RADIUS else ("coord", idx)
    return _split_envelope(pt, pz, pkind, code, name)


@dataclass
class RhythmLabel:
    kind: str       # equilibrium | spiking | amplitude-modulated spiking |
                    # bursting | amplitude-modulated bursting
    envelope_oscillations: int | None
    confidence: str = "high"

    def as_dict(self):
        return {"kind": self.kind,
                "envelope_oscillations": self.envelope_oscillations,
                "confidence": self.confidence}


TRANSIENT_FRACTION = 0.2
GAP_FACTOR = 5.0
EQUILIBRIUM_AMPLITUDE = 0.02
ENVELOPE_PROMINENCE = 1e-3


def _envelope_oscillations(values, prom):
    if len(values) < 3:
        return 0
    v = np.asarray(values)
    interior = (v[1:-1] > v[:-2] + prom) & (v[1:-1] > v[2:] + prom)
    return int(interior.sum())


def classify_rhythm(traj, coord=None, quiescence_threshold=0.1, system=None):
    """Label a trajectory as equilibrium / spiking / AM spiking / bursting / AMB.

    The first 20% of the span is discarded.  Bursting requires recurring
    quiescent intervals: spells with no extrema lasting more than 5x the
    median inter-peak interval, or runs of peaks below
    ``quiescence_threshold`` of the global envelope height.  Envelope
    oscillations are interior local maxima of the peak-value sequence at
    relative prominence 1e-3.

    Classification always reads a plain coordinate (default: the first fast
    coordinate); a derived amplitude observable such as the fast radius would
    conflate steady rotation with rest.
    """
    if coord is None:
        coord = 0
    rec = traj.raw_peaks
    if rec is not None and rec.coord == ("coord", coord) and rec.n_peaks() > 0:
        env = rec
    elif traj.K.shape[0] > 0:
        try:
            env = envelope(traj, coord)
        except EmptyEnvelopeError:
            return RhythmLabel("equilibrium", None)
    elif rec is not None and rec.n_peaks() >= 0 and rec.coord == ("coord", coord):
        env = rec
    else:
        raise ValueError(
            "classification needs either dense output or an in-loop envelope "
            f"recorded on coordinate {coord} (set envelope_coord={coord})")
    t0, t1 = traj.t0, traj.t_final
    lo = t0 + TRANSIENT_FRACTION * (t1 - t0)
    sel = env.peak_times >= lo
    pt = env.peak_times[sel]
    pv = env.peak_values[sel]
    tsel = env.trough_times >= lo
    tv = env.trough_values[tsel]

    if len(pt) < 3:
        return RhythmLabel("equilibrium", None)

    M = float(pv.max())
    m_floor = float(tv.min()) if len(tv) else float(pv.min())
    height = max(M - m_floor, 1e-300)

    # amplitude decay -> equilibrium (damped ringing onto a focus)
    amp = pv - np.interp(pt, env.trough_times[tsel], tv) if len(tv) > 1 else pv - m_floor
    fifth = max(len(amp) // 5, 1)
    a_first = np.max(amp[:fifth])
    a_last = np.max(amp[-fifth:])
    if a_last < EQUILIBRIUM_AMPLITUDE * max(a_first, height) and a_last < 0.05 * height:
        return RhythmLabel("equilibrium", None)

    # quiescent intervals: long gaps or sub-threshold runs
    dt_med = float(np.median(np.diff(pt))) if len(pt) > 1 else np.inf
    level = (pv - m_floor) / height
    quiescent_edges = []
    gaps = np.diff(pt)
    for i, g in enumerate(gaps):
        if g > GAP_FACTOR * dt_med:
            quiescent_edges.append((pt[i], pt[i + 1]))
    # sub-threshold runs lasting longer than 2 median intervals
    below = level < quiescence_threshold
    i = 0
    while i < len(pt):
        if below[i]:
            j = i
            while j + 1 < len(pt) and below[j + 1]:
                j += 1
            if pt[j] - pt[i] > 2 * dt_med:
                quiescent_edges.append((pt[i], pt[j]))
            i = j + 1
        else:
            i += 1
    quiescent_edges.sort()
    merged = []
    for a, b in quiescent_edges:
        if merged and a <= merged[-1][1] + dt_med:
            merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
        else:
            merged.append((a, b))

    prom = ENVELOPE_PROMINENCE * height
    if len(merged) >= 2:
        # active phases between quiescent intervals
        bounds = [lo] + [e for q in merged for e in q] + [t1]
        phases = []
        for a, b in zip(bounds[:-1:2], bounds[1::2]):
            mask = (pt >= a) & (pt <= b)
            if mask.sum() >= 3:
                phases.append(_envelope_oscillations(pv[mask], prom))
        complete = phases[1:-1] if len(phases) > 2 else phases
        n_osc = int(np.median(complete)) if complete else 0
        kind = "amplitude-modulated bursting" if n_osc >= 1 else "bursting"
        conf = "high" if len(merged) >= 3 else "low"
        return RhythmLabel(kind, n_osc, conf)

    n_osc = _envelope_oscillations(pv, prom)
    if n_osc >= 2:
        return RhythmLabel("amplitude-modulated spiking", n_osc)
    return RhythmLabel("spiking", 0)


def flow_to_section(system, init, eps, section, t_max, rel_tol=1e-9,
                    abs_tol=1e-11, *, t0=0.0, params=None, store=False,
                    envelope_coord=None, enforce_domain=False):
    """Flow forward (or backward, t_max < t0) to a hyperplane crossing.

    ``section = (coordinate index, level, direction)`` with direction in
    {-1, 0, +1}; the returned state satisfies |state_j - level| <= 1e-10.
    """
    traj = integrate(system, init, eps, t_max, rel_tol, abs_tol, t0=t0,
                     params=params, store=store, envelope_coord=envelope_coord,
                     section=section, enforce_domain=enforce_domain)
    if traj.status != SECTION_HIT:
        raise SectionTimeout(
            f"no section crossing before t={t_max:.6g} (status {traj.status})",
            traj.t_final, traj.states[-1])
    return traj.states[-1].copy(), traj.t_final, traj
