import numpy as np
import pytest

from torcan import averaging, cycles, explosion, integrate as itg, pipeline
from torcan.averaging import AveragedCoefficients


def test_lambda_bar_from_table_values():
    co = AveragedCoefficients(
        T=2 * np.pi, a_bar=np.array([1.0]), b_bar=-1.0, c_bar=np.array([0.0]),
        d_bar=np.array([-1.0]), e_bar=np.array([[0.0]]),
        g_bar=np.array([0.0]), phi2=0.0, xi_bar=-1.0 / 3.0, eta_bar=0.0)
    assert abs(explosion.lambda_bar(co) + 1.0 / 8.0) < 1e-15


def test_lambda_bar_requires_negative_ad():
    co = AveragedCoefficients(
        T=1.0, a_bar=np.array([1.0]), b_bar=-1.0, c_bar=np.array([0.0]),
        d_bar=np.array([+1.0]), e_bar=np.array([[0.0]]),
        g_bar=np.array([0.0]), phi2=0.0, xi_bar=0.0, eta_bar=0.0)
    with pytest.raises(explosion.InapplicableError):
        explosion.lambda_bar(co)


def test_all_brackets_vanish_gives_zero():
    co = AveragedCoefficients(
        T=1.0, a_bar=np.array([2.0]), b_bar=-1.5, c_bar=np.array([0.0]),
        d_bar=np.array([-1.0]), e_bar=np.array([[0.0]]),
        g_bar=np.array([0.0]), phi2=0.0, xi_bar=0.0, eta_bar=0.0)
    assert explosion.lambda_bar(co) == 0.0


def test_fvdp_explosion_locus(fvdp, fvdp_fold):
    for eps in (0.01, 0.001):
        pred = explosion.explosion_locus(fvdp, "alpha", eps, fvdp_fold)
        assert abs(pred.lambda_bar + 1.0 / 8.0) < 1e-6
        assert abs(pred.predicted_value - (1.0 - eps / 8.0)) < 1e-8
        assert pred.ad_product < 0
    pred0 = explosion.explosion_locus(fvdp, "alpha", 0.0, fvdp_fold)
    assert abs(pred0.predicted_value - 1.0) < 1e-8


def test_fvdp_locus_independent_of_omega(fvdp):
    vals = []
    for omega in (1.0, 1.7):
        orb = cycles.orbit_from_simulation(fvdp, [-0.5], N=50, m=4,
                                           overrides={"omega": omega})
        fam = cycles.continue_cycle_family(fvdp, orb, 0, (-0.9, -0.4),
                                           step=0.05, direction=-1.0)
        fold = cycles.find_fold_of_cycles(fvdp, fam)
        pred = explosion.explosion_locus(fvdp, "alpha", 0.01, fold)
        vals.append(pred.predicted_value)
    assert abs(vals[0] - vals[1]) < 1e-8


def _radial1_exploded(system, sigma, eps, t_end=None):
    """True when the envelope relaxes to the rest state (bursting side).

    Spiking keeps the radius pinned near the attracting branch (> 0.5); on
    the bursting side the envelope recurrently collapses towards r = 0.
    """
    t_end = t_end or 40.0 / eps
    z0 = np.array([1.35, 0.0, -0.6])
    traj = itg.integrate(system, z0, eps, t_end, 1e-9, 1e-11, store=False,
                         params={"sigma": sigma})
    env = traj.raw_peaks
    r_final = np.hypot(traj.states[-1, 0], traj.states[-1, 1])
    sel = env.trough_times > 0.25 * traj.t_final
    troughs = env.trough_values[sel]
    return bool((len(troughs) and troughs.min() < 0.5) or r_final < 0.5)


def test_radial1_lambda_matches_closed_form(radial1):
    # kappa = 1: a=1, b=-4, c=1, d=-2, e=0, xi=-8, eta=-1  ->  lambda = -1/8
    fold = pipeline.seed_fold(radial1)
    assert abs(fold.y[0] + 1.0) < 1e-8
    co = averaging.averaged_coefficients(radial1, fold.orbit, extended=True)
    assert abs(co.a_bar[0] - 1.0) < 1e-6
    assert abs(co.b_bar + 4.0) < 1e-6
    assert abs(co.c_bar[0] - 1.0) < 1e-6
    assert abs(co.d_bar[0] + 2.0) < 1e-6
    assert abs(co.e_bar[0, 0]) < 1e-6
    assert abs(co.xi_bar + 8.0) < 2e-6
    assert abs(co.eta_bar + 1.0) < 1e-6
    lam = explosion.lambda_bar(co)
    assert abs(lam + 1.0 / 8.0) < 1e-6


def test_radial1_empirical_explosion_brackets_prediction(radial1):
    # bisect the spiking/bursting transition in sigma at eps = 1e-3 and
    # compare g_bar(sigma*)/eps = sigma*/eps with lambda_bar within 20%
    eps = 1e-3
    fold = pipeline.seed_fold(radial1)
    pred = explosion.explosion_locus(radial1, "sigma", eps, fold)
    lam = pred.lambda_bar
    lo, hi = -4e-4, 0.0
    assert _radial1_exploded(radial1, lo, eps)
    assert not _radial1_exploded(radial1, hi, eps)
    for _ in range(22):
        mid = 0.5 * (lo + hi)
        if _radial1_exploded(radial1, mid, eps):
            lo = mid
        else:
            hi = mid
    sigma_star = 0.5 * (lo + hi)
    assert abs(sigma_star / eps - lam) < 0.2 * abs(lam)
    assert abs(pred.predicted_value - lam * eps) < 1e-10
