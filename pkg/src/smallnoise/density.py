"""Shared container for density estimates on a spatial grid, plus metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalInstabilityError


def normalize_log_density(xgrid: np.ndarray, log_rho: np.ndarray) -> np.ndarray:
    """Shift log_rho so exp integrates to one over xgrid (trapezoid rule)."""
    finite = np.isfinite(log_rho)
    if not np.any(finite):
        raise NumericalInstabilityError("log density is -inf everywhere on the grid")
    m = float(np.max(log_rho[finite]))
    w = np.exp(log_rho - m)
    mass = float(np.trapezoid(w, xgrid))
    if not (mass > 0.0 and np.isfinite(mass)):
        raise NumericalInstabilityError(f"density mass {mass} is not normalizable")
    return log_rho - (m + np.log(mass))


@dataclass
class DensityEstimate:
    """A density on xgrid in log form.

    log_rho is the raw (unnormalized) log value; log_q is normalized so
    exp(log_q) integrates to one over xgrid by the trapezoid rule. se_log is
    a per-point standard error for log_rho (zeros for deterministic methods)
    and ess the effective sample size behind each point (inf when exact).
    """

    xgrid: np.ndarray
    log_rho: np.ndarray
    log_q: np.ndarray
    se_log: np.ndarray
    ess: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.xgrid)
        for nm in ("log_rho", "log_q", "se_log", "ess"):
            if len(getattr(self, nm)) != n:
                raise ConfigError(f"{nm} length does not match xgrid")
        if np.any(np.diff(self.xgrid) <= 0):
            raise ConfigError("xgrid must be strictly increasing")

    @classmethod
    def from_log_rho(cls, xgrid, log_rho, method, se_log=None, ess=None, metadata=None):
        xgrid = np.asarray(xgrid, dtype=float)
        log_rho = np.asarray(log_rho, dtype=float)
        log_q = normalize_log_density(xgrid, log_rho)
        if se_log is None:
            se_log = np.zeros_like(log_rho)
        if ess is None:
            ess = np.full_like(log_rho, np.inf)
        return cls(
            xgrid=xgrid,
            log_rho=log_rho,
            log_q=log_q,
            se_log=np.asarray(se_log, dtype=float),
            ess=np.asarray(ess, dtype=float),
            method=method,
            metadata=metadata or {},
        )

    def interp_log_q(self, xgrid: np.ndarray) -> np.ndarray:
        """Linear interpolation of log_q; -inf outside the source grid."""
        xgrid = np.asarray(xgrid, dtype=float)
        out = np.interp(xgrid, self.xgrid, self.log_q)
        out[(xgrid < self.xgrid[0]) | (xgrid > self.xgrid[-1])] = -np.inf
        return out

    def log_mass(self, a: float, b: float, n: int = 401) -> float:
        """log of the integral of exp(log_q) over [a, b] (window-normalized)."""
        a = max(a, float(self.xgrid[0]))
        b = min(b, float(self.xgrid[-1]))
        if not b > a:
            return -np.inf
        xs = np.linspace(a, b, n)
        lq = np.interp(xs, self.xgrid, self.log_q)
        m = float(np.max(lq))
        if not np.isfinite(m):
            return -np.inf
        return m + float(np.log(np.trapezoid(np.exp(lq - m), xs)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("x,log_rho,log_q,se_log,ess\n")
            for row in zip(self.xgrid, self.log_rho, self.log_q, self.se_log, self.ess):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def tv_distance(a: DensityEstimate, b: DensityEstimate, xgrid=None) -> float:
    """Total variation distance, both densities renormalized on a common grid."""
    if xgrid is None:
        if len(a.xgrid) != len(b.xgrid) or not np.allclose(a.xgrid, b.xgrid):
            raise ConfigError("densities live on different grids; pass a common xgrid")
        xgrid = a.xgrid
    xgrid = np.asarray(xgrid, dtype=float)
    la = normalize_log_density(xgrid, a.interp_log_q(xgrid))
    lb = normalize_log_density(xgrid, b.interp_log_q(xgrid))
    return 0.5 * float(np.trapezoid(np.abs(np.exp(la) - np.exp(lb)), xgrid))
