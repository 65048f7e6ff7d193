"""Path-functional Monte Carlo density: ingredients, clouds, estimates."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallnoise.density import tv_distance
from smallnoise.errors import ConfigError
from smallnoise.filters import RescaledFilterPath, reverse_and_rescale, run_approximate_filter
from smallnoise.models import builtin_model
from smallnoise.pathdensity import (
    MIN_EPS,
    WARN_EPS,
    PathFunctional,
    _aux_grid,
    log_density_estimate,
    reference_density,
    simulate_aux_paths,
)
from smallnoise.sde import TimeGrid, simulate_pair


def _const_tracking(x0: float, eps: float, ds: float = 1e-2) -> RescaledFilterPath:
    horizon = 1.0 / eps
    n = max(1, math.ceil(horizon / ds - 1e-9))
    s = np.linspace(0.0, horizon, n + 1)
    return RescaledFilterPath(
        s_grid=s, values=np.full(n + 1, x0), eps=eps, ds=horizon / n
    )


def test_functional_rejects_bad_eps(linear_pure):
    with pytest.raises(ConfigError):
        PathFunctional(linear_pure, eps=0.0)


def test_correction_integrand_pinned_value():
    # h = x + tanh x, b = -x, eps = 0.1, evaluated at z=0, m=1:
    # -1*2*0 + 0 + 0 - 0.5*2 - 0.1*(-1) - 0 = -0.9
    m = builtin_model("tanh-nonlinear", alpha=1.0)
    fn = PathFunctional(m, eps=0.1)
    assert float(fn.correction_integrand(0.0, 1.0)) == pytest.approx(-0.9, abs=1e-12)


def test_potential_and_initial_weight_closed_forms(linear_pure):
    eps = 0.3
    fn = PathFunctional(linear_pure, eps)
    z, m = 0.7, -0.4
    assert float(fn.potential(z, m)) == pytest.approx(0.5 * z * z - m * z, abs=1e-12)
    ref = (
        -0.5 * z * z
        - 0.5 * math.log(2.0 * math.pi)
        + (0.5 * z * z - m * z) / eps
    )
    assert float(fn.initial_log_weight(z, m)) == pytest.approx(ref, abs=1e-12)


@given(
    z=st.floats(-3.0, 3.0),
    m=st.floats(-3.0, 3.0),
    alpha=st.floats(0.1, 1.0),
)
@settings(max_examples=60, deadline=None)
def test_leading_integrand_half_square_identity(z, m, alpha):
    mod = builtin_model("tanh-nonlinear", alpha=alpha)
    fn = PathFunctional(mod, eps=0.2)
    h = float(mod.h(z))
    hp = float(mod.h_deriv(z))
    hm = float(mod.h(m))
    ref = 0.5 * ((h - m * hp) ** 2 - (h - hm) ** 2)
    assert float(fn.leading_integrand(z, m)) == pytest.approx(ref, abs=1e-10)


def test_aux_grid_divides_horizon():
    for eps, ds in [(0.3, 1e-2), (0.1, 1e-2), (0.25, 3e-3)]:
        n, ds_eff = _aux_grid(eps, ds)
        assert ds_eff <= ds + 1e-15
        assert n * ds_eff == pytest.approx(1.0 / eps, abs=1e-12)


def test_aux_cloud_is_an_ou_bridge_for_flat_tracking(linear_pure):
    """Constant tracking at 0 turns the cloud into a plain OU simulation.

    The leading integrand then vanishes identically, the correction reduces
    to -1/2 per unit time, and the maximal excursion obeys a generous
    Gaussian bound.
    """
    eps = 0.1
    tracking = _const_tracking(0.0, eps)
    bundle = simulate_aux_paths(0.0, eps, tracking, linear_pure, n_paths=1000, seed=2)
    horizon = 1.0 / eps
    np.testing.assert_allclose(bundle.int_leading, 0.0, atol=1e-12)
    np.testing.assert_allclose(bundle.int_correction, -0.5 * horizon, atol=1e-9)
    bound = 5.0 * math.sqrt(eps) * math.sqrt(2.0 * math.log(horizon))
    assert bundle.max_abs <= bound
    assert bundle.terminal.shape == (1000,)


def test_aux_cloud_rejects_mismatched_eps(linear_pure):
    tracking = _const_tracking(0.0, 0.1)
    with pytest.raises(ConfigError):
        simulate_aux_paths(0.0, 0.2, tracking, linear_pure, n_paths=4)


def test_estimate_gates_and_metadata(linear_pure):
    tracking = _const_tracking(0.0, 0.3)
    xg = np.linspace(-1.0, 1.0, 11)
    with pytest.raises(ConfigError):
        log_density_estimate(xg, MIN_EPS / 2.0, _const_tracking(0.0, MIN_EPS / 2.0), linear_pure)
    with pytest.raises(ConfigError):
        log_density_estimate(xg[::-1], 0.3, tracking, linear_pure)
    with pytest.raises(ConfigError):
        log_density_estimate(xg, 0.3, tracking, linear_pure, n_paths=1)

    est = log_density_estimate(xg, 0.3, tracking, linear_pure, n_paths=400, seed=1)
    assert est.method == "picard-mc"
    assert est.metadata["low_variance_regime"] is True
    assert np.all(est.ess <= 400.0 + 1e-9)
    np.testing.assert_allclose(
        est.se_log,
        np.sqrt(np.clip(1.0 / np.maximum(est.ess, 1e-300) - 1.0 / 400.0, 0.0, None)),
        atol=1e-12,
    )

    low = log_density_estimate(
        np.linspace(-0.5, 0.5, 5),
        0.1,
        _const_tracking(0.0, 0.1),
        linear_pure,
        n_paths=300,
        seed=1,
        pilot=False,
    )
    assert low.metadata["low_variance_regime"] is False
    assert WARN_EPS == 0.2


def test_estimate_is_deterministic_and_smooth(linear_pure):
    eps = 0.3
    g = TimeGrid(0.0, 1.0, 1000)
    x0 = linear_pure.draw_initial(0)
    _, Y = simulate_pair(linear_pure, eps, g, x0, seed=0)
    F = run_approximate_filter(Y, linear_pure, eps)
    tracking = reverse_and_rescale(F)
    xg = np.linspace(0.2, 0.26, 4)
    a = log_density_estimate(xg, eps, tracking, linear_pure, n_paths=500, seed=5)
    b = log_density_estimate(xg, eps, tracking, linear_pure, n_paths=500, seed=5)
    np.testing.assert_array_equal(a.log_rho, b.log_rho)
    # common random numbers across grid points keep the curve smooth
    second = np.abs(np.diff(a.log_rho, 2))
    assert float(np.max(second)) < 5e-3


def test_estimate_tracks_exact_posterior(linear_pure):
    eps = 0.3
    g = TimeGrid(0.0, 1.0, 1000)
    x0 = linear_pure.draw_initial(0)
    X, Y = simulate_pair(linear_pure, eps, g, x0, seed=0)
    xg = np.linspace(X.terminal - 1.5, X.terminal + 1.5, 41)
    mc = reference_density(
        linear_pure, eps, Y, xg, method="picard-mc", n_paths=4000, seed=0
    )
    exact = reference_density(linear_pure, eps, Y, xg, method="kalman")
    assert tv_distance(mc, exact) < 0.2


def test_reference_density_dispatch(linear_ou, tanh_model):
    eps = 0.3
    g = TimeGrid(0.0, 1.0, 1000)
    _, Y = simulate_pair(linear_ou, eps, g, 0.2, seed=6)
    xg = np.linspace(-3.0, 3.0, 601)
    assert reference_density(linear_ou, eps, Y, xg).method == "kalman"
    _, Y2 = simulate_pair(tanh_model, eps, g, 0.2, seed=6)
    assert reference_density(tanh_model, eps, Y2, xg).method == "grid-bayes"
    with pytest.raises(ConfigError):
        reference_density(linear_ou, eps, Y, xg, method="bogus")
