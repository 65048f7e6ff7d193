"""Filtering front ends: high-gain approximate filter, exact linear-Gaussian
solution, and a discretized conditional-density (grid) filter.

The approximate filter integrates

    dM_t = b(M_t) dt + (1/eps) (dY_t - h(M_t) dt),    M_0 = 0,

by the Euler scheme on the observation grid. Because the correction gain is
1/eps the explicit scheme is only stable for dt <= 0.1 eps^2; that bound is
enforced up front with an actionable message rather than letting the
recursion blow up.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density import DensityEstimate
from .errors import (
    ConfigError,
    GridTooSmallError,
    NumericalInstabilityError,
    SimulationDivergedError,
)
from .models import ReducedModel
from .sde import SamplePath, TimeGrid, V_STREAM, simulate_pair

STABILITY_FACTOR = 0.1


def tracking_horizon(eps: float) -> float:
    """Horizon log(1/eps) on the rescaled clock used by tracking checks."""
    return math.log(1.0 / eps)


@dataclass(frozen=True)
class FilterTrajectory:
    """Approximate filter path M on the observation grid."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    eps: float

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class RescaledFilterPath:
    """Time-reversed filter on the stretched clock s in [0, 1/eps].

    values[j] = M(1 - eps * s_j) with s_j = j * ds, so values[0] is the
    terminal filter state and the far end is the filter's start.
    """

    s_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    eps: float
    ds: float

    def value_at(self, s) -> np.ndarray:
        return np.interp(s, self.s_grid, self.values)


def run_approximate_filter(Y: SamplePath, model: ReducedModel, eps: float) -> FilterTrajectory:
    """Euler integration of the high-gain filter driven by the record Y."""
    dt = Y.grid.dt
    if dt > STABILITY_FACTOR * eps * eps * (1.0 + 1e-12):
        raise SimulationDivergedError(
            f"filter step dt={dt:.3g} too coarse for eps={eps}",
            hint=f"use dt <= eps^2 * {STABILITY_FACTOR} = {STABILITY_FACTOR * eps * eps:.3g}",
        )
    b = model.b
    h = model.h
    dy = np.diff(Y.values)
    m = 0.0
    out = np.empty(Y.grid.n_steps + 1)
    out[0] = m
    for k in range(Y.grid.n_steps):
        m = m + float(b(m)) * dt + (dy[k] - float(h(m)) * dt) / eps
        if not math.isfinite(m):
            raise SimulationDivergedError(
                f"filter diverged at step {k + 1}",
                hint=f"use dt <= eps^2 * {STABILITY_FACTOR}",
            )
        out[k + 1] = m
    return FilterTrajectory(grid=Y.grid, values=out, eps=eps)


def reverse_and_rescale(F: FilterTrajectory, ds: float = 1e-2) -> RescaledFilterPath:
    """Reverse the filter in time and stretch the clock by 1/eps.

    The requested step is shrunk to ds_eff = horizon / ceil(horizon / ds) so
    the grid lands exactly on the horizon 1/eps.
    """
    if ds <= 0:
        raise ConfigError(f"ds must be positive, got {ds}")
    eps = F.eps
    horizon = 1.0 / eps
    n = max(1, math.ceil(horizon / ds - 1e-9))
    ds_eff = horizon / n
    s = np.linspace(0.0, horizon, n + 1)
    t = F.grid.t1 - eps * s
    vals = np.interp(t, F.grid.times(), F.values)
    return RescaledFilterPath(s_grid=s, values=vals, eps=eps, ds=ds_eff)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: float
    variance: float


def stationary_variance(a: float, c: float, eps: float) -> float:
    """Positive root of the stationary variance equation."""
    return eps * eps * (-a + math.sqrt(a * a + c * c / (eps * eps))) / (c * c)


def kalman_bucy(
    Y: SamplePath,
    a: float,
    c: float,
    eps: float,
    prior_mean: float = 0.0,
    prior_var: float = 1.0,
    return_paths: bool = False,
):
    """Exact conditional law for dX = -a X dt + dB, dY = c X dt + eps dV.

    Euler integration of the variance equation
    P' = -2 a P + 1 - c^2 P^2 / eps^2 and of the conditional mean with gain
    c P / eps^2, both explicit on the observation grid. Returns the Gaussian
    posterior at the final time (optionally with the full mean/variance
    paths).
    """
    if prior_var <= 0:
        raise ConfigError(f"prior_var must be positive, got {prior_var}")
    dt = Y.grid.dt
    dy = np.diff(Y.values)
    n = Y.grid.n_steps
    e2 = eps * eps
    m = prior_mean
    P = prior_var
    ms = np.empty(n + 1)
    Ps = np.empty(n + 1)
    ms[0] = m
    Ps[0] = P
    for k in range(n):
        gain = c * P / e2
        m_new = m - a * m * dt + gain * (dy[k] - c * m * dt)
        P_new = P + dt * (-2.0 * a * P + 1.0 - c * c * P * P / e2)
        if P_new <= 0.0 or not math.isfinite(P_new) or not math.isfinite(m_new):
            raise NumericalInstabilityError(
                f"variance recursion left (0, inf) at step {k + 1} (P={P_new!r})",
                hint="reduce dt; the explicit variance step needs dt * c^2 P / eps^2 < 1",
            )
        m, P = m_new, P_new
        ms[k + 1] = m
        Ps[k + 1] = P
    post = GaussianPosterior(mean=float(m), variance=float(P))
    if return_paths:
        return post, ms, Ps
    return post


def kalman_density(
    Y: SamplePath,
    model: ReducedModel,
    eps: float,
    xgrid: np.ndarray,
) -> DensityEstimate:
    """Exact posterior evaluated on xgrid (model must be linear)."""
    if model.linear_coeffs is None:
        raise ConfigError(f"model '{model.name}' is not linear; no exact posterior")
    a, c = model.linear_coeffs
    post = kalman_bucy(Y, a, c, eps, model.prior_mean, model.prior_var)
    xgrid = np.asarray(xgrid, dtype=float)
    log_rho = -((xgrid - post.mean) ** 2) / (2.0 * post.variance) - 0.5 * math.log(
        2.0 * math.pi * post.variance
    )
    return DensityEstimate.from_log_rho(
        xgrid,
        log_rho,
        method="kalman",
        metadata={"mean": post.mean, "variance": post.variance, "eps": eps},
    )


def grid_bayes_filter(
    Y: SamplePath,
    model: ReducedModel,
    eps: float,
    xgrid: np.ndarray,
    dt_obs: Optional[float] = None,
) -> DensityEstimate:
    """Discretized conditional density by alternating prediction/correction.

    Prediction convolves with the Euler transition kernel
    N(x + b(x) dt_obs, dt_obs), truncated at six standard deviations;
    correction multiplies by the Gaussian observation likelihood of that
    step's increment and renormalizes. All bookkeeping is in log space, so
    exponent magnitudes of order 1/eps^2 are handled without overflow.
    """
    xgrid = np.asarray(xgrid, dtype=float)
    if len(xgrid) < 8 or np.any(np.diff(xgrid) <= 0):
        raise ConfigError("xgrid must be increasing with at least 8 points")
    dx = float(xgrid[1] - xgrid[0])
    if not np.allclose(np.diff(xgrid), dx, rtol=1e-9, atol=0.0):
        raise ConfigError("xgrid must be uniform")
    dt_y = Y.grid.dt
    if dt_obs is None:
        dt_obs = dt_y
    ratio = dt_obs / dt_y
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * r:
        raise ConfigError(
            f"dt_obs={dt_obs!r} must be an integer multiple of the Y step {dt_y!r}"
        )
    if Y.grid.n_steps % r != 0:
        raise ConfigError("dt_obs must divide the observation horizon")
    n_obs = Y.grid.n_steps // r
    dy = np.diff(Y.values)
    dy_obs = dy.reshape(n_obs, r).sum(axis=1) if r > 1 else dy

    sd = math.sqrt(dt_obs)
    if xgrid[-1] - xgrid[0] < 12.0 * sd:
        raise ConfigError("xgrid narrower than the truncated transition kernel")
    drifted = xgrid + np.asarray(model.b(xgrid), dtype=float) * dt_obs
    diff = xgrid[:, None] - drifted[None, :]
    with np.errstate(under="ignore"):
        kernel = np.exp(-(diff**2) / (2.0 * dt_obs)) * (dx / (sd * math.sqrt(2.0 * math.pi)))
    kernel[np.abs(diff) > 6.0 * sd] = 0.0

    hx = np.asarray(model.h(xgrid), dtype=float)
    lp = np.asarray(model.log_p0(xgrid), dtype=float)
    lz = float(np.max(lp))
    mass0 = float(np.trapezoid(np.exp(lp - lz), xgrid))
    lp = lp - lz - math.log(mass0)

    e2dt = 2.0 * eps * eps * dt_obs
    min_mass, max_mass = np.inf, -np.inf
    for k in range(n_obs):
        m = float(np.max(lp))
        with np.errstate(under="ignore"):
            w = np.exp(lp - m)
        w_in = float(np.trapezoid(w, xgrid))
        w_pred = kernel @ w
        w_out = float(np.trapezoid(w_pred, xgrid))
        if not (w_out > 0.0 and math.isfinite(w_out)):
            side = "left" if w[: len(w) // 2].sum() >= w[len(w) // 2 :].sum() else "right"
            raise GridTooSmallError(
                f"probability mass escaped the grid at step {k + 1} "
                f"({side} boundary, x={xgrid[0] if side == 'left' else xgrid[-1]:.6g})",
                hint="widen xgrid to cover the signal range plus kernel support",
            )
        step_mass = w_out / w_in
        min_mass = min(min_mass, step_mass)
        max_mass = max(max_mass, step_mass)
        with np.errstate(divide="ignore"):
            lp = np.log(w_pred) + m - ((dy_obs[k] - hx * dt_obs) ** 2) / e2dt
        m2 = float(np.max(lp))
        norm = float(np.trapezoid(np.exp(lp - m2), xgrid))
        if not (norm > 0.0 and math.isfinite(norm)):
            raise GridTooSmallError(
                f"posterior mass vanished after correction at step {k + 1}",
                hint="widen xgrid; the likelihood concentrated off-grid",
            )
        lp = lp - m2 - math.log(norm)

    return DensityEstimate.from_log_rho(
        xgrid,
        lp,
        method="grid-bayes",
        metadata={
            "eps": eps,
            "dt_obs": dt_obs,
            "n_obs_steps": n_obs,
            "min_step_mass": min_mass,
            "max_step_mass": max_mass,
        },
    )


@dataclass
class FilterConvergenceStats:
    """Tracking error of the rescaled filter against the signal endpoint."""

    eps_list: list
    entries: list  # one dict per eps: eps, T_eps, median_sup_dev, fitted_C
    sup_devs: dict  # eps -> list of per-seed sup deviations
    dt: float
    ds: float

    def to_json(self) -> dict:
        return {
            "dt": self.dt,
            "ds": self.ds,
            "entries": self.entries,
            "sup_devs": {repr(k): v for k, v in self.sup_devs.items()},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def check_filter_convergence(
    model: ReducedModel,
    eps_list,
    seeds,
    dt: float = 1e-3,
    ds: float = 1e-2,
    v_stream_for=None,
) -> FilterConvergenceStats:
    """Median sup-deviation of the rescaled filter from X_1 up to log(1/eps).

    For each seed the signal path is simulated once per eps with the same
    signal stream (the initial draw and signal increments do not depend on
    eps), fresh observation noise per eps when `v_stream_for` is given.
    """
    eps_list = list(eps_list)
    seeds = list(seeds)
    grid = TimeGrid(0.0, 1.0, int(round(1.0 / dt)))
    sup_devs = {e: [] for e in eps_list}
    for seed in seeds:
        x0 = model.draw_initial(seed)
        for i, eps in enumerate(eps_list):
            vs = v_stream_for(i) if v_stream_for is not None else V_STREAM
            X, Y = simulate_pair(model, eps, grid, x0, seed, v_stream=vs)
            F = run_approximate_filter(Y, model, eps)
            R = reverse_and_rescale(F, ds=ds)
            T_eps = tracking_horizon(eps)
            mask = R.s_grid <= T_eps + 1e-12
            dev = float(np.max(np.abs(R.values[mask] - X.terminal)))
            sup_devs[eps].append(dev)
    entries = []
    for eps in eps_list:
        T_eps = tracking_horizon(eps)
        med = float(np.median(sup_devs[eps]))
        entries.append(
            {
                "eps": eps,
                "T_eps": T_eps,
                "median_sup_dev": med,
                "fitted_C": med * math.sqrt(T_eps),
            }
        )
    return FilterConvergenceStats(
        eps_list=eps_list, entries=entries, sup_devs=sup_devs, dt=dt, ds=ds
    )
