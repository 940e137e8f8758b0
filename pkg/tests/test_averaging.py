import numpy as np
import pytest

from torcan import averaging, cycles
from torcan.bvp import Discretization, PeriodicOrbit
from torcan.models.fvdp import TABLE_COEFFS


def test_frame_orthonormal_and_closed_form(fvdp, fvdp_fold):
    frame = averaging.moving_frame(fvdp, fvdp_fold.orbit)
    norms_p = np.linalg.norm(frame.p, axis=1)
    norms_q = np.linalg.norm(frame.q, axis=1)
    dots = np.einsum("ni,ni->n", frame.p, frame.q)
    assert np.abs(norms_p - 1).max() < 1e-12
    assert np.abs(norms_q - 1).max() < 1e-12
    assert np.abs(dots).max() < 1e-12
    # on the circle: p = (-sin, cos), q = (cos, sin) up to the starting phase
    xc = fvdp_fold.orbit.disc.states_at_colloc(fvdp_fold.orbit.X)
    r = np.hypot(xc[:, 0], xc[:, 1])
    e_r = xc / r[:, None]
    assert np.abs(frame.q - e_r).max() < 1e-6
    assert np.abs(np.einsum("ni,ni->n", frame.p, e_r)).max() < 1e-6


def test_frame_requires_nonvanishing_speed(harmonic):
    disc = Discretization(10, 4)
    X = np.zeros((disc.n_nodes, 2))
    orb = PeriodicOrbit("harmonic", disc, X, 1.0, np.array([0.0]),
                        harmonic.pack_params(), 0.0, {})
    with pytest.raises(cycles.Assumption3Error):
        averaging.moving_frame(harmonic, orb)


def test_phi_identically_one_on_fvdp_fold(fvdp, fvdp_fold):
    Phi, Phi_end, _ = averaging.fundamental_solution(fvdp, fvdp_fold.orbit)
    assert np.abs(Phi - 1.0).max() < 1e-8
    assert abs(Phi_end - 1.0) < 1e-8


def test_phi_periodic_and_closed_form_on_ph_fold(ph, ph_fold):
    orbit = ph_fold.orbit
    Phi, Phi_end, _ = averaging.fundamental_solution(ph, orbit)
    assert abs(Phi_end - 1.0) < 1e-8
    cf = averaging.closed_form_phi(ph, orbit)
    assert np.abs(Phi - cf).max() < 1e-8 * max(1.0, Phi.max())


def test_fvdp_table_coefficients(fvdp, fvdp_fold):
    co = averaging.averaged_coefficients(fvdp, fvdp_fold.orbit, extended=True)
    assert abs(co.a_bar[0] - TABLE_COEFFS["a_bar"]) < 1e-6
    assert abs(co.b_bar - TABLE_COEFFS["b_bar"]) < 1e-6
    assert abs(co.c_bar[0] - TABLE_COEFFS["c_bar"]) < 1e-6
    assert abs(co.xi_bar - TABLE_COEFFS["xi_bar"]) < 1e-6
    assert abs(co.d_bar[0] - TABLE_COEFFS["d_bar"]) < 1e-6
    assert abs(co.e_bar[0, 0] - TABLE_COEFFS["e_bar"]) < 1e-6
    assert abs(co.eta_bar - TABLE_COEFFS["eta_bar"]) < 1e-6
    # g_bar = alpha - 1 at alpha = 1
    assert abs(co.g_bar[0]) < 1e-6
    assert abs(co.rho0) < 1e-6


def test_oracle_closed_form_coefficients(oracle, oracle_fold_orbit):
    co = averaging.averaged_coefficients(oracle, oracle_fold_orbit)
    kappa = 1.0
    assert np.abs(co.a_bar - [1.0, 0.0]).max() < 1e-6
    assert abs(co.b_bar + 4.0) < 1e-6
    assert np.abs(co.c_bar - [1.0, 0.0]).max() < 1e-6
    assert np.abs(co.d_bar - [-2 * kappa, 0.0]).max() < 1e-6
    assert np.abs(co.e_bar - [[0.0, 1.0], [-1.0, 0.0]]).max() < 1e-6
    assert np.abs(co.g_bar - [0.0, 1.0]).max() < 1e-6      # (y2, sigma+1)
    assert abs(co.rho0) < 1e-6
    Phi, _, _ = averaging.fundamental_solution(oracle, oracle_fold_orbit)
    assert np.abs(Phi - 1.0).max() < 1e-8


def test_pointwise_identity_on_cycles(fvdp, oracle, hopf_normal_form, ph,
                                       ph_fold, fvdp_fold):
    """q.(Dxf)q == tr Dxf - f.(Dxf)f/|f|^2 at every node, folded or not."""
    from torcan import numderiv

    cases = [
        (fvdp, fvdp_fold.orbit),
        (fvdp, cycles.orbit_from_simulation(fvdp, [-0.5], N=40, m=4)),
        (oracle, cycles.orbit_from_simulation(oracle, [-0.5, 0.0], N=40, m=4)),
        (hopf_normal_form, cycles.orbit_from_simulation(hopf_normal_form, [0.0])),
        (ph, ph_fold.orbit),
    ]
    for system, orbit in cases:
        disc = orbit.disc
        xc = np.ascontiguousarray(disc.states_at_colloc(orbit.X))
        Y = np.ascontiguousarray(np.broadcast_to(orbit.y, (xc.shape[0], orbit.y.size)))
        frame = averaging.moving_frame(system, orbit)
        dxf, _ = numderiv.jac_x(system, xc, Y, orbit.par)
        lhs = np.einsum("ni,nij,nj->n", frame.q, dxf, frame.q)
        tr = dxf[:, 0, 0] + dxf[:, 1, 1]
        fAf = np.einsum("ni,nij,nj->n", frame.p, dxf, frame.p)
        rhs = tr - fAf
        scale = max(1.0, np.abs(lhs).max())
        assert np.abs(lhs - rhs).max() < 1e-10 * scale, system.name


def test_folded_cycle_integral_vanishes(fvdp, oracle, ph, fvdp_fold,
                                        oracle_fold, ph_fold):
    for system, fold in [(fvdp, fvdp_fold), (oracle, oracle_fold), (ph, ph_fold)]:
        orbit = fold.orbit
        disc = orbit.disc
        frame = averaging.moving_frame(system, orbit)
        _, _, psi = averaging.fundamental_solution(system, orbit, frame)
        assert abs(disc.quad(psi)) < 1e-8, system.name


def test_nonfolded_cycle_average_equals_phi2(fvdp):
    orbit = cycles.orbit_from_simulation(fvdp, [-0.5], N=50, m=4)
    disc = orbit.disc
    frame = averaging.moving_frame(fvdp, orbit)
    _, _, psi = averaging.fundamental_solution(fvdp, orbit, frame)
    fl = cycles.floquet_exponents(fvdp, orbit)
    mean_psi = disc.quad(psi)
    assert abs(mean_psi - fl.phi2) < 1e-6 * max(1.0, abs(fl.phi2))


def test_auxiliary_functions_periodic(ph, ph_fold):
    co = averaging.averaged_coefficients(ph, ph_fold.orbit)
    assert co.checks["alpha_periodicity"] < 1e-6
    assert co.checks["beta_periodicity"] < 1e-6


def test_mesh_doubling_changes_coefficients_little(fvdp, fvdp_fold):
    co1 = averaging.averaged_coefficients(fvdp, fvdp_fold.orbit, extended=True)
    fine = cycles.refine_mesh(fvdp, fvdp_fold.orbit, factor=2, folded=True)
    co2 = averaging.averaged_coefficients(fvdp, fine, extended=True)
    for name in ("a_bar", "b_bar", "c_bar", "d_bar", "g_bar", "xi_bar", "eta_bar"):
        v1 = np.atleast_1d(getattr(co1, name)).astype(float)
        v2 = np.atleast_1d(getattr(co2, name)).astype(float)
        assert np.abs(v1 - v2).max() < 1e-6 * max(1.0, np.abs(v1).max()), name


def test_phase_shift_invariance(fvdp):
    # use a hyperbolic cycle: the plain periodic BVP is regular there, so the
    # re-anchored solve reproduces the same invariant circle to full accuracy
    orbit = cycles.orbit_from_simulation(fvdp, [-0.5], N=50, m=4)
    co1 = averaging.averaged_coefficients(fvdp, orbit, extended=True)
    shifted = orbit.copy()
    shifted.X = np.roll(orbit.X[:-1], -orbit.disc.n_nodes // 4, axis=0)
    shifted.X = np.vstack([shifted.X, shifted.X[:1]])
    orb2 = cycles.solve_cycle(fvdp, orbit.y, guess=(shifted.X, orbit.T, orbit.disc))
    assert np.abs(orb2.X[0] - orbit.X[0]).max() > 1e-3   # genuinely re-anchored
    co2 = averaging.averaged_coefficients(fvdp, orb2, extended=True)
    for name in ("a_bar", "b_bar", "c_bar", "d_bar", "e_bar", "g_bar",
                 "xi_bar", "eta_bar"):
        v1 = np.atleast_1d(getattr(co1, name)).astype(float)
        v2 = np.atleast_1d(getattr(co2, name)).astype(float)
        assert np.abs(v1 - v2).max() < 1e-8 * max(1.0, np.abs(v1).max()), name


def test_rho0_zero_cases(fvdp, oracle, fvdp_fold, oracle_fold_orbit):
    assert abs(averaging.rho0(fvdp, fvdp_fold)) < 1e-8
    assert abs(averaging.rho0(oracle, oracle_fold_orbit)) < 1e-8


def test_extended_requires_k1(oracle, oracle_fold_orbit):
    with pytest.raises(ValueError):
        averaging.averaged_coefficients(oracle, oracle_fold_orbit, extended=True)
