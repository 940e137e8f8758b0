import numpy as np
import pytest

from torcan import integrate as itg
from torcan.models.fvdp import fold_cycle_radius_oracle


def test_harmonic_full_rotation(harmonic):
    z0 = np.array([1.0, 0.0, 0.0])
    traj = itg.integrate(harmonic, z0, 0.0, 2 * np.pi, 1e-10, 1e-12)
    assert np.abs(traj.states[-1] - z0).max() < 1e-8


def test_fvdp_layer_settles_on_cubic_root(fvdp):
    # attracting-cycle radius solves r - r^3/3 - 0.5 = 0 (1-D bisection oracle)
    traj = itg.integrate(fvdp, np.array([1.8, 0.0, -0.5]), 0.0, 120.0,
                         1e-10, 1e-12, store=False)
    r_final = np.hypot(traj.states[-1, 0], traj.states[-1, 1])
    assert abs(r_final - fold_cycle_radius_oracle(-0.5)) < 1e-7


def test_interpolation_matches_stored_nodes(harmonic):
    traj = itg.integrate(harmonic, np.array([1.0, 0.0, 0.3]), 0.0, 3.0,
                         1e-9, 1e-11)
    for i in range(1, len(traj.times) - 1, 7):
        err = np.abs(traj.interpolate(traj.times[i]) - traj.states[i]).max()
        assert err < 1e-12
    assert np.all(np.diff(traj.times) > 0)


def test_backward_then_forward_returns(harmonic):
    z0 = np.array([0.7, -0.2, 1.0])
    back = itg.integrate(harmonic, z0, 0.0, -5.0, 1e-10, 1e-12)
    assert np.all(np.diff(back.times) < 0)
    fwd = itg.integrate(harmonic, back.states[-1], 0.0, 0.0, 1e-10, 1e-12,
                        t0=-5.0)
    assert np.abs(fwd.states[-1] - z0).max() < 1e-6 * max(1, np.abs(z0).max())


def test_tolerance_bounds_enforced(harmonic):
    with pytest.raises(ValueError):
        itg.integrate(harmonic, np.zeros(3), 0.0, 1.0, 1e-2, 1e-9)


def test_convergence_under_tolerance_halving(fvdp):
    z0 = np.array([1.8, 0.0, -0.5])
    loose = itg.integrate(fvdp, z0, 0.0, 40.0, 2e-8, 2e-10, store=False)
    tight = itg.integrate(fvdp, z0, 0.0, 40.0, 1e-8, 1e-10, store=False)
    ref = itg.integrate(fvdp, z0, 0.0, 40.0, 1e-12, 1e-14, store=False)
    err_loose = np.abs(loose.states[-1] - ref.states[-1]).max()
    err_tight = np.abs(tight.states[-1] - ref.states[-1]).max()
    assert err_tight < 10 * max(err_loose, 1e-13)


def test_flow_to_section_closed_form(harmonic):
    # (u, v) rotates by the angle needed to reach v = 0 from below
    z0 = np.array([1.0, -0.1, 0.0])
    state, t_hit, _ = itg.flow_to_section(harmonic, z0, 0.0, (1, 0.0, +1), 10.0)
    r0 = np.hypot(1.0, -0.1)
    angle = np.arctan2(-0.1, 1.0)
    assert abs(t_hit + angle) < 1e-9            # rotation angle to v = 0 upward
    assert abs(state[1]) <= 1e-10
    assert abs(state[0] - r0) < 1e-9


def test_section_timeout_carries_state(harmonic):
    with pytest.raises(itg.SectionTimeout) as err:
        itg.flow_to_section(harmonic, np.array([1.0, -0.1, 0.0]), 0.0,
                            (2, 5.0, 0), 3.0)
    assert err.value.state.shape == (3,)


def test_section_initial_point_wrong_direction(harmonic):
    # starting near the section moving the wrong way: first valid crossing only
    z0 = np.array([1.0, 1e-6, 0.0])   # v > 0, moving upward; want downward
    state, t_hit, _ = itg.flow_to_section(harmonic, z0, 0.0, (1, 0.0, -1), 10.0)
    assert t_hit > 1.0                # half a turn later, not immediately
    assert abs(state[1]) <= 1e-10


def test_envelope_of_sinusoid(harmonic):
    amp = 1.37
    traj = itg.integrate(harmonic, np.array([amp, 0.0, 0.0]), 0.0, 40.0,
                         1e-11, 1e-13, envelope_coord=0)
    env = itg.envelope(traj, 0)
    assert env.n_peaks() >= 5
    assert np.abs(env.peak_values - amp).max() < 1e-8
    assert np.abs(env.trough_values + amp).max() < 1e-8
    # peaks and troughs interleave
    merged = np.sort(np.concatenate([env.peak_times, env.trough_times]))
    kinds = np.concatenate([np.ones_like(env.peak_times),
                            -np.ones_like(env.trough_times)])
    order = np.argsort(np.concatenate([env.peak_times, env.trough_times]))
    assert np.all(np.abs(np.diff(kinds[order])) == 2)
    assert len(merged) == env.n_peaks() + len(env.trough_times)


def test_envelope_count_invariant_under_time_translation(harmonic):
    z0 = np.array([1.0, 0.0, 0.0])
    a = itg.integrate(harmonic, z0, 0.0, 25.0, 1e-10, 1e-12)
    b = itg.integrate(harmonic, z0, 0.0, 125.0, 1e-10, 1e-12, t0=100.0)
    assert itg.envelope(a, 0).n_peaks() == itg.envelope(b, 0).n_peaks()


def test_empty_envelope_signal(harmonic):
    traj = itg.integrate(harmonic, np.array([1.0, 0.0, 0.0]), 0.0, 0.5,
                         1e-10, 1e-12)
    with pytest.raises(itg.EmptyEnvelopeError):
        itg.envelope(traj, 0)


def test_classify_fvdp_sides(fvdp):
    # constant-envelope spiking above the explosion, envelope relaxation below
    z0 = np.array([1.8, 0.0, -0.3])
    spiking = itg.integrate(fvdp, z0, 0.01, 4000.0, 1e-8, 1e-10, store=False,
                            params={"alpha": 1.05}, envelope_coord=0)
    lab = itg.classify_rhythm(spiking)
    assert lab.kind == "spiking"
    am = itg.integrate(fvdp, z0, 0.01, 4000.0, 1e-8, 1e-10, store=False,
                       params={"alpha": 0.999}, envelope_coord=0)
    lab2 = itg.classify_rhythm(am)
    assert lab2.kind == "amplitude-modulated spiking"
    env = am.raw_peaks
    tail = env.peak_values[env.peak_times > 2000.0]
    assert tail.max() - tail.min() > 0.15     # visible envelope oscillation
    # below the explosion the orbit leaves the cycle manifold (the Cartesian
    # chart collapses through r = 0)
    burst = itg.integrate(fvdp, z0, 0.01, 4000.0, 1e-8, 1e-10, store=False,
                          params={"alpha": 0.98}, envelope_coord=0,
                          max_peaks=100_000)
    assert np.hypot(burst.states[-1, 0], burst.states[-1, 1]) < 0.5


def test_classify_equilibrium_on_damped_model(hopf_normal_form):
    # start inside the basin of r = 0? r = 0 is unstable; instead integrate a
    # damped linear focus built from the fvdp layer far field is overkill --
    # use the hopf normal form reversed in time (r = 0 attracting backwards)
    traj = itg.integrate(hopf_normal_form, np.array([0.4, 0.0, 0.0]), 0.0,
                         -40.0, 1e-10, 1e-12, store=False)
    lab = itg.classify_rhythm(traj)
    assert lab.kind == "equilibrium"


def test_stiffness_failure_carries_state(hopf_normal_form):
    # blow-up in backward time from outside the cycle -> step-size underflow
    with pytest.raises(itg.StiffnessError) as err:
        itg.integrate(hopf_normal_form, np.array([1.5, 0.0, 0.0]), 0.0, -50.0,
                      1e-9, 1e-11, store=False)
    assert np.all(np.isfinite(err.value.state[:1]))
