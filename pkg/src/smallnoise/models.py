"""Model definitions: reduced (unit-noise) form, built-ins, reduction, checks.

A reduced model carries drift b, strictly increasing observation map h with
slope bounded below by h0 > 0, and an initial log-density. The general form
with state-dependent diffusion is reduced to this one by the usual integrated
inverse-diffusion change of coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import fixed_quad
from scipy.special import ndtri

from .errors import ConfigError, InvalidModelError, ToleranceError
from .sde import initial_draw

BUILTIN_NAMES = ("linear-ou", "linear-pure", "tanh-nonlinear")


def _log_cosh(x):
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _sech2(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    s = 2.0 * e / (1.0 + e * e)
    return s * s


def _const_fn(value: float):
    def f(x):
        return np.full_like(np.asarray(x, dtype=float), value)

    return f


def _gl_antideriv(h: Callable, n: int = 64) -> Callable:
    """Numeric z -> integral of h over [0, z], fixed-order Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(n)

    def H(z):
        z = np.asarray(z, dtype=float)
        half = z / 2.0
        acc = np.zeros_like(half)
        for xi, wi in zip(nodes, weights):
            acc = acc + wi * np.asarray(h(half * (xi + 1.0)), dtype=float)
        return acc * half

    return H


@dataclass(frozen=True)
class ReducedModel:
    """Unit-diffusion model: dX = b(X) dt + dB, observation map h.

    All callables accept scalars or numpy arrays. `h_antideriv` is the map
    z -> integral of h over [0, z]; if omitted a Gauss-Legendre fallback is
    attached. `linear_coeffs` is (a, c) when b(x) = -a x and h(x) = c x, and
    None otherwise; it gates the exact linear-Gaussian oracle.
    """

    name: str
    b: Callable
    b_deriv: Callable
    h: Callable
    h_deriv: Callable
    h_deriv2: Callable
    log_p0: Callable
    p0_ppf: Callable
    h0: float
    probe_window: tuple[float, float]
    prior_mean: float = 0.0
    prior_var: float = 1.0
    linear_coeffs: Optional[tuple[float, float]] = None
    h_antideriv: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.h0 <= 0:
            raise InvalidModelError(f"h0 must be positive, got {self.h0}")
        if self.h_antideriv is None:
            object.__setattr__(self, "h_antideriv", _gl_antideriv(self.h))

    def draw_initial(self, seed: int) -> float:
        return initial_draw(self.p0_ppf, seed)


def _gaussian_log_density(mean: float, var: float) -> Callable:
    c = 0.5 * math.log(2.0 * math.pi * var)

    def logp(x):
        x = np.asarray(x, dtype=float)
        return -((x - mean) ** 2) / (2.0 * var) - c

    return logp


def _gaussian_ppf(mean: float, var: float) -> Callable:
    sd = math.sqrt(var)

    def ppf(u):
        return mean + sd * ndtri(u)

    return ppf


def builtin_model(name: str, **params) -> ReducedModel:
    """Construct one of the built-in reduced models.

    linear-ou        b(x) = -x, h(x) = c x            (c > 0, default 1)
    linear-pure      b = 0,     h(x) = x
    tanh-nonlinear   b(x) = -x, h(x) = x + alpha tanh x  (0 < alpha <= 1)

    All built-ins use a Gaussian initial density with configurable
    prior_mean / prior_var (defaults 0 and 1).
    """
    prior_mean = float(params.pop("prior_mean", 0.0))
    prior_var = float(params.pop("prior_var", 1.0))
    if prior_var <= 0:
        raise InvalidModelError(f"prior_var must be positive, got {prior_var}")
    logp = _gaussian_log_density(prior_mean, prior_var)
    ppf = _gaussian_ppf(prior_mean, prior_var)
    window = (prior_mean - 8.0 * math.sqrt(prior_var), prior_mean + 8.0 * math.sqrt(prior_var))

    if name == "linear-ou":
        c = float(params.pop("c", 1.0))
        if params:
            raise InvalidModelError(f"unknown parameters for {name}: {sorted(params)}")
        if c <= 0:
            raise InvalidModelError(f"c must be positive, got {c}")
        return ReducedModel(
            name=name,
            b=lambda x: -np.asarray(x, dtype=float),
            b_deriv=_const_fn(-1.0),
            h=lambda x: c * np.asarray(x, dtype=float),
            h_deriv=_const_fn(c),
            h_deriv2=_const_fn(0.0),
            h_antideriv=lambda z: 0.5 * c * np.asarray(z, dtype=float) ** 2,
            log_p0=logp,
            p0_ppf=ppf,
            h0=c,
            probe_window=window,
            prior_mean=prior_mean,
            prior_var=prior_var,
            linear_coeffs=(1.0, c),
            params={"c": c, "prior_mean": prior_mean, "prior_var": prior_var},
        )
    if name == "linear-pure":
        if params:
            raise InvalidModelError(f"unknown parameters for {name}: {sorted(params)}")
        return ReducedModel(
            name=name,
            b=_const_fn(0.0),
            b_deriv=_const_fn(0.0),
            h=lambda x: np.asarray(x, dtype=float),
            h_deriv=_const_fn(1.0),
            h_deriv2=_const_fn(0.0),
            h_antideriv=lambda z: 0.5 * np.asarray(z, dtype=float) ** 2,
            log_p0=logp,
            p0_ppf=ppf,
            h0=1.0,
            probe_window=window,
            prior_mean=prior_mean,
            prior_var=prior_var,
            linear_coeffs=(0.0, 1.0),
            params={"prior_mean": prior_mean, "prior_var": prior_var},
        )
    if name == "tanh-nonlinear":
        alpha = float(params.pop("alpha", 0.5))
        if params:
            raise InvalidModelError(f"unknown parameters for {name}: {sorted(params)}")
        if not (0.0 < alpha <= 1.0):
            raise InvalidModelError(f"alpha must lie in (0, 1], got {alpha}")
        return ReducedModel(
            name=name,
            b=lambda x: -np.asarray(x, dtype=float),
            b_deriv=_const_fn(-1.0),
            h=lambda x: np.asarray(x, dtype=float) + alpha * np.tanh(x),
            h_deriv=lambda x: 1.0 + alpha * _sech2(x),
            h_deriv2=lambda x: -2.0 * alpha * _sech2(x) * np.tanh(x),
            h_antideriv=lambda z: 0.5 * np.asarray(z, dtype=float) ** 2 + alpha * _log_cosh(z),
            log_p0=logp,
            p0_ppf=ppf,
            h0=1.0,
            probe_window=window,
            prior_mean=prior_mean,
            prior_var=prior_var,
            linear_coeffs=None,
            params={"alpha": alpha, "prior_mean": prior_mean, "prior_var": prior_var},
        )
    raise InvalidModelError(
        f"unknown model '{name}'", hint=f"valid names: {', '.join(BUILTIN_NAMES)}"
    )


@dataclass(frozen=True)
class OriginalModel:
    """Model in original coordinates: dXi = beta dt + sigma dB, observation gamma.

    `log_q0` is the log initial density in original coordinates, supported in
    `window`. `sigma0` and `h0` are declared lower bounds for sigma and for
    the reduced observation slope gamma' * sigma; when absent they are
    estimated from a probe grid.
    """

    beta: Callable
    beta_deriv: Callable
    sigma: Callable
    sigma_deriv: Callable
    sigma_deriv2: Callable
    gamma: Callable
    gamma_deriv: Callable
    log_q0: Callable
    window: tuple[float, float]
    sigma0: Optional[float] = None
    h0: Optional[float] = None


def to_unit_diffusion(
    orig: OriginalModel,
    n_anchors: int = 257,
    quad_tol: float = 1e-10,
    name: str = "reduced",
) -> ReducedModel:
    """Change coordinates so the diffusion coefficient becomes one.

    The new state is the antiderivative of 1/sigma (anchored at 0); the drift
    picks up the usual -sigma'/2 correction from the chain rule, the
    observation map is gamma composed with the inverse change of coordinates,
    and the initial density transforms with the Jacobian sigma. The second
    derivative of the reduced observation map is a central finite difference
    of its first derivative (step 1e-5), since the original model does not
    carry gamma''.
    """
    w0, w1 = orig.window
    if not (w1 > w0):
        raise InvalidModelError(f"bad window {orig.window}")
    w0e, w1e = min(w0, 0.0), max(w1, 0.0)

    probe = np.linspace(w0e, w1e, 801)
    sig = np.asarray(orig.sigma(probe), dtype=float)
    if not np.all(np.isfinite(sig)):
        raise InvalidModelError("sigma is not finite on the window")
    if sig.min() <= 0.0:
        bad = float(probe[int(np.argmin(sig))])
        raise InvalidModelError(
            f"sigma must stay positive; minimum {sig.min():.3g} at x={bad:.6g}",
            hint="the coordinate change needs 1/sigma integrable and monotone",
        )
    if orig.sigma0 is not None and sig.min() < orig.sigma0 - 1e-9:
        raise InvalidModelError(
            f"declared sigma0={orig.sigma0} exceeds observed minimum {sig.min():.6g}"
        )

    anchors = np.linspace(w0e, w1e, n_anchors)
    inv_sigma = lambda x: 1.0 / np.asarray(orig.sigma(x), dtype=float)
    pieces = [
        fixed_quad(inv_sigma, anchors[i], anchors[i + 1], n=16)[0]
        for i in range(n_anchors - 1)
    ]
    cum = np.concatenate(([0.0], np.cumsum(pieces)))
    # anchor the map at 0: G(0) = 0
    g_at_zero = np.interp(0.0, anchors, cum)
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(16)

    def coord_map(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < w0e - 1e-12) or np.any(x > w1e + 1e-12):
            raise ConfigError("coordinate map evaluated outside the model window")
        xc = np.clip(x, w0e, w1e)
        idx = np.clip(np.searchsorted(anchors, xc, side="right") - 1, 0, n_anchors - 2)
        lo = anchors[idx]
        half = (xc - lo) / 2.0
        acc = np.zeros_like(half)
        for xi, wi in zip(gl_nodes, gl_weights):
            acc = acc + wi * inv_sigma(lo + half * (xi + 1.0))
        return cum[idx] + acc * half - g_at_zero

    y_lo = float(coord_map(w0e))
    y_hi = float(coord_map(w1e))

    def coord_inverse(y):
        y = np.asarray(y, dtype=float)
        span = y_hi - y_lo
        if np.any(y < y_lo - 1e-9 * span) or np.any(y > y_hi + 1e-9 * span):
            raise ConfigError("inverse coordinate map evaluated outside the reduced window")
        yc = np.clip(y, y_lo, y_hi)
        lo = np.full_like(yc, w0e)
        hi = np.full_like(yc, w1e)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            below = coord_map(mid) < yc
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        mid = 0.5 * (lo + hi)
        resid = np.max(np.abs(coord_map(mid) - yc))
        if not resid <= quad_tol * (1.0 + float(np.max(np.abs(yc)))):
            raise ToleranceError(
                f"coordinate inversion residual {resid:.3g} exceeds tolerance",
                hint="raise quad_tol or widen the model window",
            )
        return mid

    def b(x):
        g = coord_inverse(x)
        return np.asarray(orig.beta(g), dtype=float) / np.asarray(
            orig.sigma(g), dtype=float
        ) - 0.5 * np.asarray(orig.sigma_deriv(g), dtype=float)

    def b_deriv(x):
        g = coord_inverse(x)
        s = np.asarray(orig.sigma(g), dtype=float)
        return (
            np.asarray(orig.beta_deriv(g), dtype=float) / s
            - np.asarray(orig.beta(g), dtype=float)
            * np.asarray(orig.sigma_deriv(g), dtype=float)
            / s**2
            - 0.5 * np.asarray(orig.sigma_deriv2(g), dtype=float)
        ) * s

    def h(x):
        return np.asarray(orig.gamma(coord_inverse(x)), dtype=float)

    def h_deriv(x):
        g = coord_inverse(x)
        return np.asarray(orig.gamma_deriv(g), dtype=float) * np.asarray(
            orig.sigma(g), dtype=float
        )

    fd_step = 1e-5

    def h_deriv2(x):
        x = np.asarray(x, dtype=float)
        return (h_deriv(x + fd_step) - h_deriv(x - fd_step)) / (2.0 * fd_step)

    def log_p0(x):
        g = coord_inverse(x)
        return np.asarray(orig.log_q0(g), dtype=float) + np.log(
            np.asarray(orig.sigma(g), dtype=float)
        )

    # probe the reduced window for the slope floor and prior moments
    margin = 1e-7 * (y_hi - y_lo)
    rgrid = np.linspace(y_lo + margin, y_hi - margin, 801)
    slopes = h_deriv(rgrid)
    h0_est = float(np.min(slopes))
    if h0_est <= 0:
        bad = float(rgrid[int(np.argmin(slopes))])
        raise InvalidModelError(
            f"reduced observation slope is not positive (min {h0_est:.3g} at x={bad:.6g})"
        )
    h0 = orig.h0 if orig.h0 is not None else h0_est

    fine = np.linspace(y_lo + margin, y_hi - margin, 4001)
    w = np.exp(log_p0(fine))
    mass = float(np.trapezoid(w, fine))
    if not (mass > 0 and math.isfinite(mass)):
        raise InvalidModelError("initial density has no mass on the window")
    mean = float(np.trapezoid(fine * w, fine)) / mass
    var = float(np.trapezoid((fine - mean) ** 2 * w, fine)) / mass
    cdf = np.concatenate(
        ([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine)))
    )
    cdf /= cdf[-1]

    def p0_ppf(u):
        return np.interp(u, cdf, fine)

    return ReducedModel(
        name=name,
        b=b,
        b_deriv=b_deriv,
        h=h,
        h_deriv=h_deriv,
        h_deriv2=h_deriv2,
        log_p0=log_p0,
        p0_ppf=p0_ppf,
        h0=float(h0),
        probe_window=(y_lo, y_hi),
        prior_mean=mean,
        prior_var=var,
        linear_coeffs=None,
        params={"reduced_from": "original", "quad_tol": quad_tol},
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the structural checks on a reduced model."""

    model_name: str
    window: tuple[float, float]
    n_probe: int
    h_min_slope: float
    h_min_slope_x: float
    h0_declared: float
    monotone_ok: bool
    monotone_violation_x: Optional[float]
    max_abs_h_deriv2: float
    b_sup: float
    b_deriv_sup: float
    p0_mass: float
    p0_ok: bool
    finite_ok: bool
    passed: bool

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["window"] = list(self.window)
        return out


def check_assumptions(
    model: ReducedModel, window: Optional[tuple[float, float]] = None, n: int = 2001
) -> AssumptionReport:
    """Probe monotonicity of h, boundedness of derivatives, prior mass.

    The probe is a finite grid over `window` (default: the model's declared
    probe window), so unbounded-domain conditions are checked in estimated
    form: the report records windowed suprema alongside the pass flags.
    """
    lo, hi = window if window is not None else model.probe_window
    grid = np.linspace(lo, hi, n)
    hp = np.asarray(model.h_deriv(grid), dtype=float)
    hpp = np.asarray(model.h_deriv2(grid), dtype=float)
    bv = np.asarray(model.b(grid), dtype=float)
    bp = np.asarray(model.b_deriv(grid), dtype=float)
    hv = np.asarray(model.h(grid), dtype=float)
    lp = np.asarray(model.log_p0(grid), dtype=float)

    finite_ok = all(
        np.all(np.isfinite(a)) for a in (hp, hpp, bv, bp, hv)
    ) and not np.any(np.isnan(lp)) and not np.any(lp == np.inf)

    i_min = int(np.argmin(hp))
    h_min_slope = float(hp[i_min])
    monotone_ok = bool(h_min_slope >= model.h0 - 1e-9)
    violation = None if monotone_ok else float(grid[i_min])

    fine = np.linspace(lo, hi, 8001)
    mass = float(np.trapezoid(np.exp(np.asarray(model.log_p0(fine), dtype=float)), fine))
    p0_ok = bool(abs(mass - 1.0) <= 1e-6)

    return AssumptionReport(
        model_name=model.name,
        window=(float(lo), float(hi)),
        n_probe=n,
        h_min_slope=h_min_slope,
        h_min_slope_x=float(grid[i_min]),
        h0_declared=float(model.h0),
        monotone_ok=monotone_ok,
        monotone_violation_x=violation,
        max_abs_h_deriv2=float(np.max(np.abs(hpp))),
        b_sup=float(np.max(np.abs(bv))),
        b_deriv_sup=float(np.max(np.abs(bp))),
        p0_mass=mass,
        p0_ok=p0_ok,
        finite_ok=bool(finite_ok),
        passed=bool(monotone_ok and p0_ok and finite_ok),
    )
