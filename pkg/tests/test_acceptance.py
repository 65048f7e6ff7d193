"""Acceptance gate: one test per shipped guarantee, one printed line each.

Each test computes its quantity at the stated tolerance, records a PASS/FAIL
line through conftest.record_acceptance, and then asserts. Longer Monte Carlo
checks reuse module-scoped fixtures so the whole file stays inside its
runtime budget.
"""
import json

import numpy as np
import pytest

from conftest import record_acceptance
from smallnoise import cli
from smallnoise.density import tv_distance
from smallnoise.experiments import SweepConfig, run_sweep
from smallnoise.filters import (
    check_filter_convergence,
    grid_bayes_filter,
    kalman_bucy,
    kalman_density,
)
from smallnoise.models import builtin_model
from smallnoise.pathdensity import PathFunctional, reference_density
from smallnoise.rate import (
    ActionProblem,
    action_gradient,
    action_objective,
    default_initial_path,
    rate_function,
    solve_action,
    split_horizon_check,
    value_limit_check,
)
from smallnoise.sde import TimeGrid, simulate_pair


def _record(n, ok, detail):
    record_acceptance(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def _simulate(model, eps, seed, dt=1e-3):
    grid = TimeGrid(0.0, 1.0, int(round(1.0 / dt)))
    x0 = model.draw_initial(seed)
    return simulate_pair(model, eps, grid, x0, seed)


@pytest.fixture(scope="module")
def sweep_linear_kalman():
    cfg = SweepConfig(
        model_name="linear-ou",
        eps_list=[0.4, 0.2, 0.1, 0.05],
        seeds=list(range(10)),
        x_half_window=1.0,
        grid_points=41,
        method="kalman",
        set_window=(0.5, 1.0),
    )
    return run_sweep(cfg)


def test_criterion_01_grid_filter_matches_exact_posterior(linear_ou):
    eps = 0.3
    X, Y = _simulate(linear_ou, eps, seed=0)
    a, c = linear_ou.linear_coeffs
    post = kalman_bucy(Y, a, c, eps, linear_ou.prior_mean, linear_ou.prior_var)
    sd = np.sqrt(post.variance)
    xgrid = np.linspace(post.mean - 4.0 * sd, post.mean + 4.0 * sd, 801)
    tv = tv_distance(
        grid_bayes_filter(Y, linear_ou, eps, xgrid, dt_obs=1e-3),
        kalman_density(Y, linear_ou, eps, xgrid),
    )
    _record(1, tv <= 0.02, f"TV(grid-bayes, kalman) = {tv:.5f} <= 0.02 on linear-ou")


def test_criterion_02_monte_carlo_density_matches_exact_posterior(linear_pure):
    eps, n_ok, worst = 0.3, 0, 0.0
    for seed in range(10):
        X, Y = _simulate(linear_pure, eps, seed)
        xgrid = np.linspace(X.terminal - 1.5, X.terminal + 1.5, 41)
        mc = reference_density(
            linear_pure, eps, Y, xgrid, method="picard-mc",
            ds=1e-2, n_paths=20000, seed=seed,
        )
        tv = tv_distance(mc, kalman_density(Y, linear_pure, eps, xgrid))
        worst = max(worst, tv)
        n_ok += tv <= 0.15
    _record(
        2, n_ok >= 8,
        f"TV(picard-mc, kalman) <= 0.15 in {n_ok}/10 seeds (worst {worst:.4f})",
    )


def test_criterion_03_sup_error_trend_linear(sweep_linear_kalman):
    med = sweep_linear_kalman.summary["median_sup_err"]
    vals = [med[k] for k in ("0.4", "0.2", "0.1", "0.05")]
    ok = all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] <= 0.25
    _record(
        3, ok,
        "median sup|eps log q + J| decreasing "
        f"({', '.join(f'{v:.3f}' for v in vals)}), last <= 0.25 (linear-ou)",
    )


def test_criterion_04_sup_error_trend_nonlinear(tanh_model):
    cfg = SweepConfig(
        model_name="tanh-nonlinear",
        model_params={"alpha": 0.5},
        eps_list=[0.4, 0.2, 0.1, 0.05],
        seeds=list(range(10)),
        x_half_window=1.0,
        grid_points=41,
        method="grid-bayes",
    )
    med = run_sweep(cfg).summary["median_sup_err"]
    vals = [med[k] for k in ("0.4", "0.2", "0.1", "0.05")]
    ok = all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] <= 0.35
    _record(
        4, ok,
        "median sup|eps log q + J| decreasing "
        f"({', '.join(f'{v:.3f}' for v in vals)}), last <= 0.35 (tanh)",
    )


def test_criterion_05_set_mass_rate(sweep_linear_kalman):
    err = sweep_linear_kalman.summary["median_set_abs_err"]["0.05"]
    _record(
        5, err <= 0.15,
        f"median |eps log mass(G) + J(inf G)| = {err:.3f} <= 0.15 at eps=0.05",
    )


def test_criterion_06_value_limits(linear_pure, tanh_model):
    parts = []
    ok = True
    for model, x1 in ((linear_pure, 0.4), (tanh_model, 0.7)):
        prob = ActionProblem(x=x1, z=x1, T=20.0, x1=x1, model=model, n_nodes=256)
        eq = abs(solve_action(prob).value)
        ok = ok and eq <= 1e-8
        parts.append(f"I(x1,x1)={eq:.1e}")
    for model in (linear_pure, tanh_model):
        rows = value_limit_check(np.linspace(-1.0, 1.0, 21), 0.0, 20.0, model)
        gap = max(r["gap"] for r in rows)
        ok = ok and gap <= 1e-2
        parts.append(f"{model.name} VT gap={gap:.1e}")
    r20 = split_horizon_check(1.0, 0.5, 20.0, 0.0, linear_pure)["residual"]
    r8 = split_horizon_check(1.0, 0.5, 8.0, 0.0, linear_pure)["residual"]
    ok = ok and r20 <= 2e-2 and r20 < r8
    parts.append(f"split residual {r8:.1e}->{r20:.1e}")
    _record(6, ok, "; ".join(parts))


def test_criterion_07_gradient_against_finite_differences(
    linear_pure, linear_ou, tanh_model
):
    rng = np.random.default_rng(20250817)
    models = (linear_pure, linear_ou, tanh_model)
    worst = 0.0
    for k in range(100):
        model = models[k % 3]
        x1 = rng.uniform(-1.0, 1.0)
        x = x1 + rng.uniform(-1.5, 1.5)
        z = x1 + rng.uniform(-1.5, 1.5)
        prob = ActionProblem(
            x=x, z=z, T=rng.uniform(0.5, 4.0), x1=x1, model=model,
            n_nodes=int(rng.integers(12, 48)),
        )
        phi = default_initial_path(prob)
        phi[1:-1] += 0.3 * rng.standard_normal(len(phi) - 2)
        g = action_gradient(phi, prob)
        fd = np.zeros_like(g)
        eta = 1e-6
        for i in range(1, len(phi) - 1):
            up, dn = phi.copy(), phi.copy()
            up[i] += eta
            dn[i] -= eta
            fd[i] = (action_objective(up, prob) - action_objective(dn, prob)) / (2 * eta)
        rel = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-10)
        worst = max(worst, rel)
    _record(
        7, worst <= 1e-5,
        f"gradient vs central differences, worst relative error {worst:.2e} <= 1e-5",
    )


def test_criterion_08_algebraic_identities(linear_pure, tanh_model):
    zz, mm = np.meshgrid(np.linspace(-2, 2, 101), np.linspace(-2, 2, 101))
    flat = np.max(np.abs(PathFunctional(linear_pure, 0.3).leading_integrand(zz, mm)))

    fn = PathFunctional(tanh_model, 0.3)
    m = np.linspace(-2.0, 2.0, 101)
    hm = np.asarray(tanh_model.h(m), dtype=float)
    hpm = np.asarray(tanh_model.h_deriv(m), dtype=float)
    diag = np.max(np.abs(fn.leading_integrand(m, m) - 0.5 * (hm - m * hpm) ** 2))

    x1 = 0.7
    xs = np.linspace(x1 - 2.0, x1 + 2.0, 101)
    hx1 = float(tanh_model.h(x1))
    vals = np.array(
        [
            hx1 * x - float(tanh_model.h(x)) * x1 - fn.potential(x, x1)
            + float(rate_function(x, x1, tanh_model))
            for x in xs
        ]
    )
    spread = float(np.max(vals) - np.min(vals))

    ok = flat <= 1e-12 and diag <= 1e-10 and spread <= 1e-8
    _record(
        8, ok,
        f"g2|h=id {flat:.1e} <= 1e-12; diagonal identity {diag:.1e} <= 1e-10; "
        f"linear-form map spread {spread:.1e} <= 1e-8",
    )


def test_criterion_09_tracking_error_shrinks_with_eps(linear_pure):
    stats = check_filter_convergence(linear_pure, [0.3, 0.2, 0.1], list(range(20)))
    meds = [e["median_sup_dev"] for e in stats.entries]
    cs = {e["eps"]: e["fitted_C"] for e in stats.entries}
    drift = abs(cs[0.1] - cs[0.2]) / cs[0.2]
    ok = meds[0] > meds[1] > meds[2] and drift < 0.5
    _record(
        9, ok,
        "median sup|m~ - X1| decreasing "
        f"({', '.join(f'{v:.3f}' for v in meds)}); fitted C drift {drift:.0%} < 50%",
    )


def test_criterion_10_reruns_are_bit_identical(tmp_path):
    outs = []
    for tag, threads in (("a", "1"), ("b", "2")):
        d = tmp_path / f"sweep_{tag}"
        argv = [
            "sweep", "--model", "linear-ou", "--eps-list", "0.3,0.2",
            "--seeds", "0,1", "--grid-points", "5", "--method", "kalman",
            "--threads", threads, "--out", str(d),
        ]
        assert cli.main(argv) == 0
        outs.append(d)
    sweep_same = all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
        for n in ("sweep.csv", "summary.json", "resolved_config.json")
    )
    dens = []
    for tag in ("a", "b"):
        d = tmp_path / f"dens_{tag}"
        argv = [
            "density", "--model", "linear-pure", "--eps", "0.3", "--seed", "2",
            "--method", "picard-mc", "--paths", "2000", "--out", str(d),
        ]
        assert cli.main(argv) == 0
        dens.append(d)
    dens_same = all(
        (dens[0] / n).read_bytes() == (dens[1] / n).read_bytes()
        for n in ("density.csv", "metadata.json", "resolved_config.json")
    )
    _record(
        10, sweep_same and dens_same,
        "sweep outputs identical for --threads 1 vs 2; "
        "density rerun identical byte for byte",
    )
