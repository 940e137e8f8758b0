import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torcan import averaging, pipeline, singularities as sg
from torcan.models.radial import exact_eigenvalues


def _oracle_coeffs(oracle, orbit, sigma):
    orb = orbit.copy()
    orb.par = oracle.pack_params({"sigma": sigma})
    orb.overrides = {"sigma": sigma}
    return averaging.averaged_coefficients(oracle, orb)


@pytest.mark.parametrize("sigma,expected", [
    (0.0, sg.FOLDED_SADDLE),
    (-1.05, sg.FOLDED_NODE),
    (-1.118, sg.DEGENERATE_NODE),       # kappa^2 + 8(sigma+1) = 0 at -1.125
    (-1.3, sg.FOLDED_FOCUS),
])
def test_classification_matches_closed_form(oracle, oracle_fold_orbit, sigma,
                                            expected):
    co = _oracle_coeffs(oracle, oracle_fold_orbit, sigma)
    ts = sg.classify(co, y_star=oracle_fold_orbit.y, overrides={"sigma": sigma})
    if expected == sg.DEGENERATE_NODE:
        # within the zero-threshold band of the exact double root at -1.125
        assert ts.kind in (sg.DEGENERATE_NODE, sg.FOLDED_NODE)
        return
    assert ts.kind == expected
    l1e, l2e = exact_eigenvalues(1.0, sigma)
    got = sorted([ts.lambda1, ts.lambda2], key=lambda z: (z.real, z.imag))
    exp = sorted([l1e, l2e], key=lambda z: (z.real, z.imag))
    for g, e in zip(got, exp):
        assert abs(g - e) < 1e-6 * max(1.0, abs(e))


def test_oracle_node_mu_and_smax(oracle, oracle_fold_orbit):
    co = _oracle_coeffs(oracle, oracle_fold_orbit, -1.05)
    ts = sg.classify(co, y_star=oracle_fold_orbit.y)
    l1e, l2e = exact_eigenvalues(1.0, -1.05)
    mu_exact = l2e.real / l1e.real
    assert abs(ts.mu - mu_exact) < 1e-6
    assert ts.s_max == sg.smax(mu_exact)


def test_synthetic_coefficients_jacobian():
    co = averaging.AveragedCoefficients(
        T=1.0, a_bar=np.array([1.0, 0.0]), b_bar=-1.0, c_bar=np.zeros(2),
        d_bar=np.array([1.0, 0.0]), e_bar=np.zeros((2, 2)),
        g_bar=np.array([0.0, 1.0]), phi2=0.0)
    J = sg.desingularized_jacobian(co)
    assert np.abs(J - [[1.0, 0.0], [2.0, 0.0]]).max() < 1e-6
    lam = np.sort(np.linalg.eigvals(J).real)
    assert np.abs(lam - [0.0, 1.0]).max() < 1e-6


def test_smax_values():
    assert sg.smax(0.039749) == 13
    assert sg.smax(1.0) == 1
    assert sg.smax(0.3) == 2
    with pytest.raises(sg.NotANodeError):
        sg.smax(-0.1)
    with pytest.raises(sg.NotANodeError):
        sg.smax(0.0)


@given(st.floats(min_value=2e-6, max_value=1.0))
@settings(max_examples=200, deadline=None)
def test_smax_floor_property(mu):
    s = sg.smax(mu)
    assert s >= 1
    assert s <= (1.0 + mu) / (2.0 * mu)
    assert s + 1 > (1.0 + mu) / (2.0 * mu)


def test_scaling_invariance_of_classification(oracle, oracle_fold_orbit):
    co = _oracle_coeffs(oracle, oracle_fold_orbit, -1.05)
    ts = sg.classify(co, y_star=oracle_fold_orbit.y)
    import copy

    co2 = copy.deepcopy(co)
    gamma = 3.7
    co2.g_bar = gamma * co2.g_bar
    co2.d_bar = gamma * co2.d_bar
    co2.e_bar = gamma * co2.e_bar
    ts2 = sg.classify(co2, y_star=oracle_fold_orbit.y)
    assert ts2.kind == ts.kind
    assert abs(ts2.mu - ts.mu) < 1e-9
    assert ts2.s_max == ts.s_max
    assert abs(ts2.lambda1.real - gamma * ts.lambda1.real) < 1e-6 * gamma * abs(ts.lambda1)


def test_chart_swap_invariance(oracle, oracle_fold_orbit):
    co = _oracle_coeffs(oracle, oracle_fold_orbit, -1.05)
    import copy

    swapped = copy.deepcopy(co)
    swapped.a_bar = co.a_bar[::-1].copy()
    swapped.c_bar = co.c_bar[::-1].copy()
    swapped.d_bar = co.d_bar[::-1].copy()
    swapped.g_bar = co.g_bar[::-1].copy()
    swapped.e_bar = co.e_bar[::-1, ::-1].copy()
    ts = sg.classify(co)
    ts2 = sg.classify(swapped)
    assert ts.kind == ts2.kind
    lam = sorted([ts.lambda1.real, ts.lambda2.real])
    lam2 = sorted([ts2.lambda1.real, ts2.lambda2.real])
    assert np.abs(np.array(lam) - lam2).max() < 1e-5 * max(1.0, abs(lam[0]))


def test_find_tfs_on_oracle_branch(oracle, oracle_fold):
    branch = pipeline.fold_branch_for(oracle, fold=oracle_fold)
    found = pipeline.find_tfs(oracle, branch=branch)
    assert len(found) == 1
    ts = found[0]
    assert np.abs(ts.y_star - [-1.0, 0.0]).max() < 1e-6
    assert abs(ts.rho0) <= 1e-9
    assert ts.kind == sg.FOLDED_SADDLE          # sigma = 0 default
    l1e, l2e = exact_eigenvalues(1.0, 0.0)
    got = sorted([ts.lambda1.real, ts.lambda2.real])
    assert abs(got[0] - l1e.real) < 1e-5 * abs(l1e.real)
    assert abs(got[1] - l2e.real) < 1e-5 * abs(l2e.real)


def test_tfs_detection_tolerance_refinement(oracle, oracle_fold):
    branch = pipeline.fold_branch_for(oracle, fold=oracle_fold)
    coarse = pipeline.find_tfs(oracle, branch=branch, tol=1e-6)[0]
    fine = pipeline.find_tfs(oracle, branch=branch, tol=1e-7)[0]
    move = np.abs(fine.y_star - coarse.y_star).max()
    # rho0 = y2 here, so the localization error is about the tolerance itself
    assert move < 10 * 1e-6


def test_fsn2_flag_on_oracle(oracle, oracle_fold):
    branch = pipeline.fold_branch_for(oracle, overrides={"sigma": -1.0},
                                      fold=None)
    found = pipeline.find_tfs(oracle, {"sigma": -1.0}, branch=branch)
    assert found
    assert found[0].fsn2                      # g_bar = (y2, sigma+1) = 0


def test_resonances_against_closed_form(oracle):
    # mu(sigma) = (kappa - D)/(kappa + D), D = sqrt(kappa^2 + 8(sigma+1))
    kappa = 1.0

    def mu_exact(sig):
        D = np.sqrt(kappa ** 2 + 8 * (sig + 1.0))
        return (kappa - D) / (kappa + D)

    grid = np.linspace(-1.124, -1.005, 60)
    mus = [mu_exact(s) for s in grid]
    found = sg.resonance_parameters(grid, mus, refine=mu_exact)
    assert found, "no resonances detected"
    for odd, sig in found:
        # closed-form crossing: 1/mu = odd -> solve for sigma
        mu_t = 1.0 / odd
        D = kappa * (1 - mu_t) / (1 + mu_t)
        sig_exact = (D ** 2 - kappa ** 2) / 8.0 - 1.0
        assert abs(sig - sig_exact) < 1e-6, (odd, sig, sig_exact)
    odds = [o for o, _ in found]
    assert 3 in odds and 5 in odds and 7 in odds
