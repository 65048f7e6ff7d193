"""Time grids, counter-based Brownian increments, Euler path simulation.

Noise streams
-------------
All randomness in the package flows through `brownian`, which hashes
(seed, stream_id, increment index) through the Philox counter-based bit
generator. Increment i of a stream is a pure function of that triple and the
step size, so any path can be regenerated in isolation, in any order, on any
worker. Stream ids are assigned by convention:

====================  ======================================================
stream id             use
====================  ======================================================
0                     signal Brownian motion B
1                     observation Brownian motion V (single runs)
2 + j                 Monte Carlo auxiliary path j
2**32 + i             observation noise for entry i of a sweep's eps list
                      (signal stays on stream 0, identical across eps)
2**62                 scalar draw for the signal's initial condition
====================  ======================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, SimulationDivergedError

X_STREAM = 0
V_STREAM = 1
MC_STREAM_BASE = 2
SWEEP_V_STREAM_BASE = 2**32
X0_STREAM = 2**62


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t1] with n_steps intervals.

    Parameters
    ----------
    t0, t1 : float
        Endpoints, t1 > t0.
    n_steps : int
        Number of Euler intervals (grid has n_steps + 1 points).
    """

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps <= 0:
            raise ConfigError(f"n_steps must be positive, got {self.n_steps}")
        if not (self.t1 > self.t0):
            raise ConfigError(f"need t1 > t0, got [{self.t0}, {self.t1}]")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n_steps + 1)


def _uniforms(seed: int, stream_id: int, n: int) -> np.ndarray:
    """n uniforms in the open interval (0,1), counter-based.

    Word k of the Philox stream keyed (seed, stream_id) maps to
    ((raw >> 11) + 0.5) * 2**-53, so value k never depends on how many values
    were requested before it.
    """
    raw = np.random.Philox(key=[seed, stream_id]).random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class BrownianIncrements:
    """Gaussian increments for one stream over one grid."""

    seed: int
    stream_id: int
    grid: TimeGrid
    values: np.ndarray = field(repr=False)


def brownian(seed: int, stream_id: int, grid: TimeGrid) -> BrownianIncrements:
    """Brownian increments: value i = ndtri(u_i) * sqrt(dt).

    Strictly counter-based: increment i depends only on (seed, stream_id, i)
    and dt. In particular two grids sharing dt produce bitwise-identical
    leading increments regardless of their lengths.
    """
    u = _uniforms(seed, stream_id, grid.n_steps)
    vals = ndtri(u) * math.sqrt(grid.dt)
    vals.flags.writeable = False
    return BrownianIncrements(seed=seed, stream_id=stream_id, grid=grid, values=vals)


def initial_draw(log_p0_ppf: Callable[[float], float], seed: int) -> float:
    """One quantile draw for the initial condition, on its own stream."""
    u = float(_uniforms(seed, X0_STREAM, 1)[0])
    return float(log_p0_ppf(u))


@dataclass(frozen=True)
class SamplePath:
    """A scalar path sampled on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        if len(self.values) != self.grid.n_steps + 1:
            raise ConfigError(
                f"path '{self.label}' has {len(self.values)} values for "
                f"{self.grid.n_steps + 1} grid points"
            )

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def to_csv(self, path) -> None:
        times = self.grid.times()
        with open(path, "w", newline="") as fh:
            fh.write("t,value\n")
            for t, v in zip(times, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")


def simulate_diffusion(
    drift: Callable[[float, float], float],
    noise_scale: float,
    grid: TimeGrid,
    x0: float,
    increments: BrownianIncrements,
    label: str = "",
) -> SamplePath:
    """Euler scheme x_{k+1} = x_k + drift(t_k, x_k) dt + noise_scale dW_k."""
    if increments.grid != grid:
        raise ConfigError("increments were generated on a different grid")
    dt = grid.dt
    t = grid.t0
    x = float(x0)
    dw = increments.values
    out = np.empty(grid.n_steps + 1)
    out[0] = x
    for k in range(grid.n_steps):
        x = x + drift(t, x) * dt + noise_scale * dw[k]
        if not math.isfinite(x):
            raise SimulationDivergedError(
                f"path '{label}' diverged at step {k + 1} (t={t + dt:.6g})",
                hint="reduce dt or check the drift for super-linear growth",
            )
        out[k + 1] = x
        t += dt
    return SamplePath(grid=grid, values=out, label=label)


def simulate_pair(
    model,
    eps: float,
    grid: TimeGrid,
    x0: float,
    seed: int,
    v_stream: int = V_STREAM,
) -> tuple[SamplePath, SamplePath]:
    """Simulate the signal X and its observation record Y on one grid.

    X solves dX = b(X) dt + dB with X_0 = x0 (stream 0); Y accumulates
    dY = h(X) dt + eps dV with Y_0 = 0 (stream `v_stream`, default 1). The
    observation integrand uses the left endpoint h(X_k), matching the Euler
    convention of the signal.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    b = model.b
    dB = brownian(seed, X_STREAM, grid)
    X = simulate_diffusion(lambda t, x: b(x), 1.0, grid, x0, dB, label="X")
    dV = brownian(seed, v_stream, grid)
    dt = grid.dt
    incr = model.h(X.values[:-1]) * dt + eps * dV.values
    yvals = np.concatenate(([0.0], np.cumsum(incr)))
    if not np.all(np.isfinite(yvals)):
        raise SimulationDivergedError("observation path diverged")
    Y = SamplePath(grid=grid, values=yvals, label="Y")
    return X, Y
