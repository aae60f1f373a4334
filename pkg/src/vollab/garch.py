"""Conditional-variance recursions, likelihoods, simulation, and forecasting.

Three families, all order (1,1) with a constant mean mu and eps_t = r_t - mu:

    garch   sigma2_t = omega + alpha*eps_{t-1}^2 + beta*sigma2_{t-1}
    gjr     sigma2_t = omega + (alpha + gamma*[eps_{t-1}<0])*eps_{t-1}^2
                             + beta*sigma2_{t-1}
    egarch  ln sigma2_t = omega + alpha*(|z_{t-1}| - E|z|) + gamma*z_{t-1}
                                + beta*ln sigma2_{t-1}

Returns are percent, so every variance is percent squared (omega is the
log-variance intercept for egarch). The filter initializes sigma2_0 at the
mean squared demeaned return unless an explicit value is supplied;
simulation starts from the unconditional variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from numba import njit

from .dist import InnovationDist, abs_moment, log_density, sample
from .market_data import ReturnSeries

FAMILIES = ("garch", "gjr", "egarch")


class GarchError(ValueError):
    """Raised for invalid model specifications, parameters, or variance paths."""


@dataclass(frozen=True)
class GarchSpec:
    """Model family, lag orders, and innovation distribution (constant mean)."""

    family: str
    dist: InnovationDist
    p: int = 1
    q: int = 1
    o: int | None = None
    mean: str = "constant"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GarchError(f"unknown family {self.family!r}")
        if self.p < 1 or self.q < 1:
            raise GarchError("lag orders p and q must be >= 1")
        expected_o = 0 if self.family == "garch" else 1
        if self.o is None:
            object.__setattr__(self, "o", expected_o)
        elif self.o != expected_o:
            raise GarchError(f"family {self.family!r} requires o = {expected_o}")
        if self.mean != "constant":
            raise GarchError("only the constant mean model is supported")

    @property
    def n_params(self) -> int:
        """Free parameters: mu, omega, alpha, beta (+gamma) + dist shapes."""
        base = 4 if self.family == "garch" else 5
        return base + self.dist.n_shape_params

    def param_names(self) -> list:
        names = ["mu", "omega", "alpha"]
        if self.family != "garch":
            names.append("gamma")
        names.append("beta")
        if self.dist.kind in ("student_t", "skew_t"):
            names.append("nu")
        if self.dist.kind == "skew_t":
            names.append("lambda")
        return names


@dataclass(frozen=True)
class GarchParams:
    """Coefficient vector; gamma is 0 for the symmetric garch family."""

    mu: float
    omega: float
    alpha: float
    beta: float
    gamma: float = 0.0

    def as_dict(self) -> dict:
        return {
            "mu": self.mu,
            "omega": self.omega,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "beta": self.beta,
        }


@dataclass(frozen=True)
class VariancePath:
    """Filtered conditional variances with residuals, aligned to the returns."""

    sigma2: np.ndarray
    residuals: np.ndarray
    std_residuals: np.ndarray


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    sigma2_path: np.ndarray
    sigma_path: np.ndarray
    method: str  # "analytic" | "simulation"
    n_paths: int = 0
    seed: int = 0


def _check_params(spec: GarchSpec, params: GarchParams) -> None:
    if spec.family in ("garch", "gjr"):
        if params.omega <= 0:
            raise GarchError("omega must be positive")
        if params.alpha < 0 or params.beta < 0:
            raise GarchError("alpha and beta must be nonnegative")
        if params.alpha + params.gamma < 0:
            raise GarchError("alpha + gamma must be nonnegative")
        if spec.family == "garch" and params.gamma != 0.0:
            raise GarchError("garch family has no gamma term")
    else:
        if abs(params.beta) >= 1:
            raise GarchError("egarch requires |beta| < 1")


def _require_order_11(spec: GarchSpec) -> None:
    if spec.p != 1 or spec.q != 1:
        raise GarchError(
            f"unsupported order (p={spec.p}, q={spec.q}); only (1,1) recursions are implemented"
        )


@njit(cache=True)
def _garch_filter(eps2, omega, alpha, beta, s0):
    n = eps2.shape[0]
    s = np.empty(n)
    s[0] = s0
    for t in range(1, n):
        s[t] = omega + alpha * eps2[t - 1] + beta * s[t - 1]
    return s


@njit(cache=True)
def _gjr_filter(eps, eps2, omega, alpha, gamma, beta, s0):
    n = eps2.shape[0]
    s = np.empty(n)
    s[0] = s0
    for t in range(1, n):
        arch = alpha + (gamma if eps[t - 1] < 0.0 else 0.0)
        s[t] = omega + arch * eps2[t - 1] + beta * s[t - 1]
    return s


@njit(cache=True)
def _egarch_filter(eps, omega, alpha, gamma, beta, ez, log_s0):
    n = eps.shape[0]
    logs = np.empty(n)
    logs[0] = log_s0
    for t in range(1, n):
        vol = math.exp(0.5 * logs[t - 1])
        if not (vol > 0.0 and math.isfinite(vol)):
            # under/overflowed log-variance: poison the tail so the caller rejects
            for u in range(t, n):
                logs[u] = math.nan
            break
        z = eps[t - 1] / vol
        logs[t] = omega + alpha * (abs(z) - ez) + gamma * z + beta * logs[t - 1]
    return np.exp(logs)


@njit(cache=True)
def _garch_gjr_simulate(z, mu, omega, alpha, gamma, beta, s0):
    n = z.shape[0]
    sigma2 = np.empty(n)
    r = np.empty(n)
    sigma2[0] = s0
    eps_prev = 0.0
    for t in range(n):
        if t > 0:
            arch = alpha + (gamma if eps_prev < 0.0 else 0.0)
            sigma2[t] = omega + arch * eps_prev * eps_prev + beta * sigma2[t - 1]
        eps_prev = math.sqrt(sigma2[t]) * z[t]
        r[t] = mu + eps_prev
    return r, sigma2


@njit(cache=True)
def _egarch_simulate(z, mu, omega, alpha, gamma, beta, ez, log_s0):
    n = z.shape[0]
    sigma2 = np.empty(n)
    r = np.empty(n)
    logs = log_s0
    z_prev = 0.0
    for t in range(n):
        if t > 0:
            logs = omega + alpha * (abs(z_prev) - ez) + gamma * z_prev + beta * logs
        sigma2[t] = math.exp(logs)
        z_prev = z[t]
        r[t] = mu + math.sqrt(sigma2[t]) * z_prev
    return r, sigma2


def filter_variance(
    spec: GarchSpec,
    params: GarchParams,
    returns: ReturnSeries,
    sigma2_init: float | None = None,
) -> VariancePath:
    """Run the family's variance recursion over a return series.

    sigma2_init overrides the default backcast start (mean squared demeaned
    return); simulation consistency checks pass the generating start here.
    """
    _require_order_11(spec)
    _check_params(spec, params)
    if len(returns) < 2:
        raise GarchError("need at least 2 returns to filter")
    eps = returns.values - params.mu
    if sigma2_init is None:
        sigma2_init = float(np.mean(eps * eps))
    if not sigma2_init > 0:
        raise GarchError("initial variance must be positive (degenerate series?)")

    if spec.family == "garch":
        sigma2 = _garch_filter(eps * eps, params.omega, params.alpha, params.beta, sigma2_init)
    elif spec.family == "gjr":
        sigma2 = _gjr_filter(
            eps, eps * eps, params.omega, params.alpha, params.gamma, params.beta, sigma2_init
        )
    else:
        ez = abs_moment(spec.dist)
        sigma2 = _egarch_filter(
            eps, params.omega, params.alpha, params.gamma, params.beta, ez, math.log(sigma2_init)
        )

    bad = np.nonzero(~(np.isfinite(sigma2) & (sigma2 > 0)))[0]
    if bad.size:
        raise GarchError(f"conditional variance invalid at index {bad[0]}")
    return VariancePath(sigma2=sigma2, residuals=eps, std_residuals=eps / np.sqrt(sigma2))


def log_likelihood(
    spec: GarchSpec,
    params: GarchParams,
    returns: ReturnSeries,
    sigma2_init: float | None = None,
) -> float:
    """Sum over t of log g(z_t) - 0.5*ln sigma2_t under the spec's distribution."""
    path = filter_variance(spec, params, returns, sigma2_init=sigma2_init)
    ll = float(
        np.sum(log_density(path.std_residuals, spec.dist) - 0.5 * np.log(path.sigma2))
    )
    if not math.isfinite(ll):
        raise GarchError("log-likelihood is not finite")
    return ll


def stationarity_margin(spec: GarchSpec, params: GarchParams) -> float:
    """Distance of the persistence from 1; positive means stationary."""
    if spec.family == "garch":
        return 1.0 - params.alpha - params.beta
    if spec.family == "gjr":
        return 1.0 - params.alpha - params.gamma / 2.0 - params.beta
    return 1.0 - abs(params.beta)


def _unconditional_variance(spec: GarchSpec, params: GarchParams) -> float:
    margin = stationarity_margin(spec, params)
    if margin <= 0:
        raise GarchError("parameters are not stationary (margin <= 0)")
    if spec.family == "egarch":
        return math.exp(params.omega / (1.0 - params.beta))
    return params.omega / margin


def _synthetic_dates(n: int) -> tuple:
    start = date(2000, 1, 3)
    return tuple(start + timedelta(days=i) for i in range(n))


def simulate_path(
    spec: GarchSpec, params: GarchParams, n: int, seed: int
) -> tuple[ReturnSeries, np.ndarray]:
    """Simulate n returns plus the generating conditional-variance path.

    Starts at the unconditional variance, so the process is stationary from
    the first draw. Deterministic per seed.
    """
    _require_order_11(spec)
    _check_params(spec, params)
    if n < 1:
        raise GarchError("n must be positive")
    s0 = _unconditional_variance(spec, params)
    z = sample(spec.dist, n, seed)
    if spec.family == "egarch":
        ez = abs_moment(spec.dist)
        r, sigma2 = _egarch_simulate(
            z, params.mu, params.omega, params.alpha, params.gamma, params.beta, ez, math.log(s0)
        )
    else:
        r, sigma2 = _garch_gjr_simulate(
            z, params.mu, params.omega, params.alpha, params.gamma, params.beta, s0
        )
    return ReturnSeries(dates=_synthetic_dates(n), values=r), sigma2


def simulate(spec: GarchSpec, params: GarchParams, n: int, seed: int) -> ReturnSeries:
    """Simulate a return series from the model (see simulate_path)."""
    return simulate_path(spec, params, n, seed)[0]


def forecast(
    spec: GarchSpec,
    params: GarchParams,
    path: VariancePath,
    horizon: int,
    n_paths: int = 0,
    seed: int = 0,
) -> ForecastResult:
    """Variance forecasts for 1..horizon days past the end of a filtered path.

    garch/gjr are fully analytic: one recursion step, then the geometric
    mean-reversion sigma2_{h} = omega + phi*sigma2_{h-1} with phi the
    persistence. egarch is analytic for one step and Monte-Carlo (n_paths
    simulated innovation paths) beyond that.
    """
    _require_order_11(spec)
    _check_params(spec, params)
    if horizon < 1:
        raise GarchError("horizon must be >= 1")
    if path.sigma2.size == 0:
        raise GarchError("variance path is empty")
    eps_last = float(path.residuals[-1])
    s_last = float(path.sigma2[-1])

    if spec.family in ("garch", "gjr"):
        arch = params.alpha + (params.gamma if eps_last < 0.0 else 0.0)
        step1 = params.omega + arch * eps_last * eps_last + params.beta * s_last
        phi = params.alpha + params.beta + (
            params.gamma / 2.0 if spec.family == "gjr" else 0.0
        )
        out = np.empty(horizon)
        out[0] = step1
        for h in range(1, horizon):
            out[h] = params.omega + phi * out[h - 1]
        return ForecastResult(
            horizon=horizon, sigma2_path=out, sigma_path=np.sqrt(out), method="analytic"
        )

    ez = abs_moment(spec.dist)
    z_last = eps_last / math.sqrt(s_last)
    log_step1 = (
        params.omega
        + params.alpha * (abs(z_last) - ez)
        + params.gamma * z_last
        + params.beta * math.log(s_last)
    )
    out = np.empty(horizon)
    out[0] = math.exp(log_step1)
    if horizon == 1:
        return ForecastResult(
            horizon=1, sigma2_path=out, sigma_path=np.sqrt(out), method="analytic"
        )
    if n_paths < 100:
        raise GarchError("egarch multi-step forecasting needs n_paths >= 100")
    z = sample(spec.dist, n_paths * (horizon - 1), seed).reshape(n_paths, horizon - 1)
    logs = np.full(n_paths, log_step1)
    for h in range(1, horizon):
        zh = z[:, h - 1]
        logs = (
            params.omega
            + params.alpha * (np.abs(zh) - ez)
            + params.gamma * zh
            + params.beta * logs
        )
        out[h] = float(np.mean(np.exp(logs)))
    return ForecastResult(
        horizon=horizon,
        sigma2_path=out,
        sigma_path=np.sqrt(out),
        method="simulation",
        n_paths=n_paths,
        seed=seed,
    )
