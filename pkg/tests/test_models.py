import numpy as np
import pytest

from torcan import numderiv
from torcan.models import DomainError, get_model, model_names
from torcan.models.ph import eps_from_params

from conftest import LINEAR_DXF, LINEAR_DXG, LINEAR_DYF, LINEAR_DYG


def test_registry_has_six_models():
    assert model_names() == ["fvdp", "hr", "mlt", "ph", "radial_oracle", "wci"]


def test_unknown_model_enumerates_registry():
    with pytest.raises(KeyError) as err:
        get_model("nope")
    for name in model_names():
        assert name in str(err.value)


def test_mlt_defaults_match_standard_set(mlt):
    expected = {"g_L": 0.5, "g_K": 2, "V_L": -0.5, "V_K": -0.7, "V_Ca": 1.0,
                "c1": -0.01, "c2": 0.15, "c3": 0.1, "c4": 0.16, "tau0": 3}
    for key, val in expected.items():
        assert mlt.defaults[key] == val
    assert mlt.eps_default == 0.001


def test_hr_defaults_match_standard_set():
    hr = get_model("hr")
    expected = {"a": 0.5, "phi": 1.0, "alpha": -0.1, "k": 0.2, "b": 10.0}
    for key, val in expected.items():
        assert hr.defaults[key] == val


def test_ph_defaults_and_time_scale_ratio(ph):
    assert ph.defaults["delta"] == 0.472938
    assert abs(ph.eps_default - 0.0035) < 1e-6
    assert abs(eps_from_params(ph.defaults) - 0.0035) < 1e-6
    # calibrated half-activation of IP3 degradation (see README)
    assert ph.defaults["K_3K"] == 0.05


def test_ph_rhs_finite_at_published_state(ph):
    out = ph.eval_rhs(np.array([0.3, 0.4]), np.array([1.7, 0.2]), 0.0035)
    assert np.all(np.isfinite(out))


def test_eval_rhs_layer_problem_freezes_slow(fvdp, oracle):
    out = fvdp.eval_rhs(np.array([1.0, 0.0]), np.array([-2.0 / 3.0]), 0.0)
    assert np.allclose(out[:2], [0.0, 1.0], atol=1e-12)   # fast block (0, omega)
    assert out[2] == 0.0                                   # layer: slow block zero
    out = oracle.eval_rhs(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 0.0)
    assert np.allclose(out[:2], [0.0, 1.0], atol=1e-12)
    assert np.all(out[2:] == 0.0)


def test_eval_rhs_domain_violation_names_coordinate(ph):
    with pytest.raises(DomainError) as err:
        ph.eval_rhs(np.array([10.0, 0.4]), np.array([1.7, 0.2]), 0.0)
    assert err.value.coord == "c"


def test_linear_system_jacobians_exact(linear_system):
    x = np.array([0.37, -0.81])
    y = np.array([1.2, -0.4])
    mats = linear_system.jacobians(x, y)
    assert np.allclose(mats["dxf"], LINEAR_DXF, atol=1e-8)
    assert np.allclose(mats["dyf"], LINEAR_DYF, atol=1e-8)
    assert np.allclose(mats["dxg"], LINEAR_DXG, atol=1e-8)
    assert np.allclose(mats["dyg"], LINEAR_DYG, atol=1e-8)


def test_radial_fold_cycle_trace_vanishes_pointwise(oracle):
    # h = h' = 0 at the fold makes tr D_x f zero at every point of the circle
    for th in np.linspace(0, 2 * np.pi, 7):
        mats = oracle.jacobians(np.array([np.cos(th), np.sin(th)]),
                                np.array([-1.0, 0.0]))
        assert abs(np.trace(mats["dxf"])) < 1e-9


def test_analytic_vs_fd_jacobians_agree(oracle):
    rng = np.random.default_rng(7)
    hooks = oracle.jac_hooks
    try:
        oracle.jac_hooks = {}
        for _ in range(100):
            x = rng.uniform(-1.5, 1.5, size=2)
            y = rng.uniform(-1.5, 1.5, size=2)
            fd = oracle.jacobians(x, y)
            oracle.jac_hooks = hooks
            an = oracle.jacobians(x, y)
            oracle.jac_hooks = {}
            for key in ("dxf", "dyf", "dxg", "dyg"):
                scale = max(1.0, np.abs(an[key]).max())
                assert np.abs(fd[key] - an[key]).max() < 1e-5 * scale, key
    finally:
        oracle.jac_hooks = hooks


def test_rotational_symmetry_radial_derivative(oracle):
    # d(r h)/dr = y1 + 6 r^2 - 5 r^4 equals q.(D_x f) q from the Cartesian Jacobian
    rng = np.random.default_rng(3)
    for _ in range(20):
        r = rng.uniform(0.3, 1.8)
        th = rng.uniform(0, 2 * np.pi)
        y1 = rng.uniform(-2.0, 0.5)
        x = np.array([r * np.cos(th), r * np.sin(th)])
        mats = oracle.jacobians(x, np.array([y1, 0.0]))
        q = x / r
        qAq = q @ mats["dxf"] @ q
        drdr = y1 + 6 * r ** 2 - 5 * r ** 4
        assert abs(qAq - drdr) < 1e-10 * max(1.0, abs(drdr))
