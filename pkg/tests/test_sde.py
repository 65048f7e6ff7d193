"""Counter-based noise streams and the Euler integrator."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from smallnoise.errors import ConfigError, SimulationDivergedError
from smallnoise.sde import (
    MC_STREAM_BASE,
    SWEEP_V_STREAM_BASE,
    V_STREAM,
    X_STREAM,
    BrownianIncrements,
    SamplePath,
    TimeGrid,
    brownian,
    initial_draw,
    simulate_diffusion,
    simulate_pair,
)


def test_time_grid_basics():
    g = TimeGrid(0.0, 1.0, 1000)
    assert g.dt == 1e-3
    t = g.times()
    assert len(t) == 1001
    assert t[0] == 0.0 and t[-1] == 1.0
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ConfigError):
        TimeGrid(1.0, 1.0, 10)


def test_increment_prefix_stability():
    # same dt, shorter horizon: leading increments must be bitwise identical
    full = brownian(7, X_STREAM, TimeGrid(0.0, 1.0, 1000))
    half = brownian(7, X_STREAM, TimeGrid(0.0, 0.5, 500))
    np.testing.assert_array_equal(half.values, full.values[:500])


def test_streams_do_not_collide():
    g = TimeGrid(0.0, 1.0, 256)
    a = brownian(3, X_STREAM, g).values
    b = brownian(3, V_STREAM, g).values
    c = brownian(3, MC_STREAM_BASE + 5, g).values
    d = brownian(3, SWEEP_V_STREAM_BASE, g).values
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(b, d)
    np.testing.assert_array_equal(a, brownian(3, X_STREAM, g).values)


def test_increment_moments():
    g = TimeGrid(0.0, 1.0, 512)
    draws = np.concatenate(
        [brownian(11, MC_STREAM_BASE + j, g).values for j in range(200)]
    )
    n = draws.size
    assert abs(float(draws.mean())) < 5.0 * math.sqrt(g.dt / n)
    assert abs(float(draws.var()) / g.dt - 1.0) < 5.0 * math.sqrt(2.0 / n)


@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    stream=st.integers(min_value=0, max_value=2**20),
    n=st.integers(min_value=1, max_value=64),
)
@settings(max_examples=25, deadline=None)
def test_increments_are_pure_functions(seed, stream, n):
    g = TimeGrid(0.0, 1.0, n)
    a = brownian(seed, stream, g).values
    np.testing.assert_array_equal(a, brownian(seed, stream, g).values)
    assert np.all(np.isfinite(a))


def test_initial_draw_is_deterministic_and_spread():
    vals = np.array([initial_draw(ndtri, s) for s in range(400)])
    assert initial_draw(ndtri, 0) == vals[0]
    assert abs(float(vals.mean())) < 5.0 / math.sqrt(400)
    # the draw must not consume from the signal or observation streams
    g = TimeGrid(0.0, 1.0, 8)
    before = brownian(12, X_STREAM, g).values.copy()
    initial_draw(ndtri, 12)
    np.testing.assert_array_equal(before, brownian(12, X_STREAM, g).values)


def test_zero_drift_is_cumsum_of_increments():
    g = TimeGrid(0.0, 1.0, 200)
    inc = brownian(1, X_STREAM, g)
    path = simulate_diffusion(lambda t, x: 0.0, 1.0, g, 0.25, inc)
    np.testing.assert_allclose(
        path.values[1:], 0.25 + np.cumsum(inc.values), rtol=0.0, atol=1e-13
    )
    assert path.terminal == float(path.values[-1])


def test_ou_terminal_variance_matches_discrete_recursion():
    # dX = -X dt + dB from 0; the Euler chain has an exactly computable
    # terminal variance, so the tolerance is purely statistical
    n, n_seeds = 400, 600
    g = TimeGrid(0.0, 1.0, n)
    dt = g.dt
    var_exact = dt * (1.0 - (1.0 - dt) ** (2 * n)) / (1.0 - (1.0 - dt) ** 2)
    finals = np.array(
        [
            simulate_diffusion(
                lambda t, x: -x, 1.0, g, 0.0, brownian(s, X_STREAM, g)
            ).terminal
            for s in range(n_seeds)
        ]
    )
    sample_var = float(finals.var())
    assert abs(sample_var - var_exact) < 4.0 * var_exact * math.sqrt(2.0 / (n_seeds - 1))


def test_euler_self_difference_halves_with_dt():
    """Additive noise makes the scheme strong order one.

    RMS(X at step dt vs dt/2) should roughly halve when dt halves, with both
    runs driven by the same Brownian path (coarse increments are sums of the
    fine ones).
    """

    def drift(t, x):
        return -x + 0.5 * math.tanh(x)

    n_fine = 2000
    g_fine = TimeGrid(0.0, 1.0, n_fine)
    diffs = {500: [], 1000: []}
    for s in range(150):
        fine = brownian(s, X_STREAM, g_fine)
        ref = simulate_diffusion(drift, 1.0, g_fine, 0.3, fine).terminal
        for n in (500, 1000):
            r = n_fine // n
            vals = fine.values.reshape(n, r).sum(axis=1)
            grid = TimeGrid(0.0, 1.0, n)
            inc = BrownianIncrements(seed=s, stream_id=X_STREAM, grid=grid, values=vals)
            diffs[n].append(
                simulate_diffusion(drift, 1.0, grid, 0.3, inc).terminal - ref
            )
    rms = {n: float(np.sqrt(np.mean(np.square(d)))) for n, d in diffs.items()}
    ratio = rms[500] / rms[1000]
    assert 1.5 < ratio < 2.8, rms


def test_observation_increments_follow_signal(linear_ou):
    g = TimeGrid(0.0, 1.0, 250)
    X, Y = simulate_pair(linear_ou, 0.2, g, 0.1, seed=5)
    dv = brownian(5, V_STREAM, g).values
    expected = np.asarray(linear_ou.h(X.values[:-1])) * g.dt + 0.2 * dv
    np.testing.assert_allclose(np.diff(Y.values), expected, rtol=0.0, atol=1e-14)
    assert Y.values[0] == 0.0


def test_signal_is_quenched_across_eps_and_v_stream(linear_ou):
    g = TimeGrid(0.0, 1.0, 100)
    X1, _ = simulate_pair(linear_ou, 0.3, g, 0.4, seed=9)
    X2, _ = simulate_pair(linear_ou, 0.1, g, 0.4, seed=9, v_stream=SWEEP_V_STREAM_BASE)
    np.testing.assert_array_equal(X1.values, X2.values)


def test_divergence_is_reported():
    g = TimeGrid(0.0, 1.0, 100)
    inc = brownian(0, X_STREAM, g)
    with np.errstate(over="ignore"), pytest.raises(SimulationDivergedError) as err:
        simulate_diffusion(lambda t, x: x**3, 1.0, g, 4.0, inc, label="blow")
    assert "blow" in str(err.value)


def test_grid_mismatch_and_length_checks():
    g = TimeGrid(0.0, 1.0, 50)
    other = TimeGrid(0.0, 2.0, 50)
    inc = brownian(0, X_STREAM, other)
    with pytest.raises(ConfigError):
        simulate_diffusion(lambda t, x: 0.0, 1.0, g, 0.0, inc)
    with pytest.raises(ConfigError):
        SamplePath(grid=g, values=np.zeros(12))
    with pytest.raises(ConfigError):
        simulate_pair(None, -0.1, g, 0.0, 0)


def test_csv_output_is_byte_stable(tmp_path):
    g = TimeGrid(0.0, 1.0, 16)
    p = simulate_diffusion(lambda t, x: -x, 1.0, g, 0.3, brownian(2, X_STREAM, g))
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    p.to_csv(f1)
    p.to_csv(f2)
    assert f1.read_bytes() == f2.read_bytes()
    rows = f1.read_text().strip().splitlines()
    assert rows[0] == "t,value"
    got = np.array([float(r.split(",")[1]) for r in rows[1:]])
    np.testing.assert_array_equal(got, p.values)
