import numpy as np
import pytest
from numba import njit

from torcan.bvp import Discretization, PeriodicOrbit
from torcan.models import get_model
from torcan.models.base import SlowFastSystem
from torcan import cycles, pipeline


@pytest.fixture(scope="session")
def fvdp():
    return get_model("fvdp")


@pytest.fixture(scope="session")
def oracle():
    return get_model("radial_oracle")


@pytest.fixture(scope="session")
def ph():
    return get_model("ph")


@pytest.fixture(scope="session")
def mlt():
    return get_model("mlt")


@pytest.fixture(scope="session")
def fvdp_fold(fvdp):
    return pipeline.seed_fold(fvdp)


@pytest.fixture(scope="session")
def oracle_fold_orbit(oracle):
    """Exact folded circle of the rotational oracle as a collocation orbit."""
    disc = Discretization(50, 4)
    th = 2 * np.pi * disc.node_tau
    X = np.column_stack([np.cos(th), np.sin(th)])
    return PeriodicOrbit("radial_oracle", disc, X, 2 * np.pi,
                         np.array([-1.0, 0.0]), oracle.pack_params(), 0.0, {})


@pytest.fixture(scope="session")
def oracle_fold(oracle):
    return pipeline.seed_fold(oracle)


@pytest.fixture(scope="session")
def mlt_fold(mlt):
    return pipeline.seed_fold(mlt)


@pytest.fixture(scope="session")
def ph_fold(ph):
    return pipeline.seed_fold(ph)


@pytest.fixture(scope="session")
def ph_tfs(ph, ph_fold):
    branch = pipeline.fold_branch_for(ph, fold=ph_fold)
    found = pipeline.find_tfs(ph, branch=branch)
    assert found, "PH toral folded singularity not found"
    return found[0], branch


# -- small test-local systems ------------------------------------------------


@njit(nogil=True, cache=True)
def _harmonic_kernel(x, y, par, eps, out):
    out[0] = -par[0] * x[1]
    out[1] = par[0] * x[0]
    out[2] = 0.0


@pytest.fixture(scope="session")
def harmonic():
    """Pure rotation u' = -w v, v' = w u with an inert slow variable."""
    return SlowFastSystem(
        name="harmonic", k_slow=1, param_names=("w",), defaults={"w": 1.0},
        state_names=("u", "v", "y"), kernel=_harmonic_kernel,
        domain_lo=np.array([-10.0, -10.0, -10.0]),
        domain_hi=np.array([10.0, 10.0, 10.0]),
        eps_default=0.0)


@njit(nogil=True, cache=True)
def _hopf_kernel(x, y, par, eps, out):
    # r' = r(1 - r^2), theta' = 1; slow variable inert
    u, v = x[0], x[1]
    s = 1.0 - (u * u + v * v)
    out[0] = u * s - v
    out[1] = v * s + u
    out[2] = 0.0


@pytest.fixture(scope="session")
def hopf_normal_form():
    """Textbook attracting cycle r = 1 with phi2 = -2."""
    return SlowFastSystem(
        name="hopf_nf", k_slow=1, param_names=("unused",), defaults={"unused": 0.0},
        state_names=("u", "v", "y"), kernel=_hopf_kernel,
        domain_lo=np.array([-5.0, -5.0, -5.0]),
        domain_hi=np.array([5.0, 5.0, 5.0]),
        cycle_seed=((np.array([1.5, 0.0]), np.array([0.0])), 30.0),
        eps_default=0.0)


@njit(nogil=True, cache=True)
def _linear_kernel(x, y, par, eps, out):
    # f = A x + B y, g = C x + D y with fixed coefficient matrices
    out[0] = 0.3 * x[0] - 1.2 * x[1] + 0.7 * y[0] - 0.4 * y[1]
    out[1] = 0.9 * x[0] + 0.1 * x[1] - 0.2 * y[0] + 1.1 * y[1]
    out[2] = -0.8 * x[0] + 0.5 * x[1] + 0.6 * y[0] + 0.2 * y[1]
    out[3] = 0.25 * x[0] - 0.75 * x[1] - 0.35 * y[0] - 0.9 * y[1]


LINEAR_DXF = np.array([[0.3, -1.2], [0.9, 0.1]])
LINEAR_DYF = np.array([[0.7, -0.4], [-0.2, 1.1]])
LINEAR_DXG = np.array([[-0.8, 0.5], [0.25, -0.75]])
LINEAR_DYG = np.array([[0.6, 0.2], [-0.35, -0.9]])


@pytest.fixture(scope="session")
def linear_system():
    return SlowFastSystem(
        name="linear_test", k_slow=2, param_names=("unused",),
        defaults={"unused": 0.0}, state_names=("x1", "x2", "y1", "y2"),
        kernel=_linear_kernel,
        domain_lo=np.array([-100.0] * 4), domain_hi=np.array([100.0] * 4),
        eps_default=0.0)


@njit(nogil=True, cache=True)
def _radial1_kernel(x, y, par, eps, out):
    # k = 1 variant of the rotational oracle: g = sigma - kappa*(r^2 - 1)
    omega, kappa, sigma = par[0], par[1], par[2]
    u, v = x[0], x[1]
    r2 = u * u + v * v
    h = y[0] + 2.0 * r2 - r2 * r2
    out[0] = u * h - omega * v
    out[1] = v * h + omega * u
    out[2] = sigma - kappa * (r2 - 1.0)


@pytest.fixture(scope="session")
def radial1():
    """k = 1 reduction of the rotational oracle (closed-form explosion)."""
    return SlowFastSystem(
        name="radial1", k_slow=1, param_names=("omega", "kappa", "sigma"),
        defaults={"omega": 1.0, "kappa": 1.0, "sigma": 0.0},
        state_names=("u", "v", "y"), kernel=_radial1_kernel,
        domain_lo=np.array([-3.0, -3.0, -4.0]),
        domain_hi=np.array([3.0, 3.0, 4.0]),
        envelope_obs=("fast_radius", -1),
        cycle_seed=((np.array([1.4, 0.0]), np.array([-0.5])), 40.0),
        fold_hint={"y0": [-0.5], "x0": [1.4, 0.0], "settle": 40.0,
                   "free_index": 0, "range": (-1.5, -0.3), "direction": -1.0,
                   "step": 0.05},
        eps_default=1e-3)
