"""Standardized innovation distributions: normal, Student-t, and skewed-t.

Every distribution here has zero mean and unit variance, so standardized
residuals z = eps/sigma can be scored directly. The Student-t is the
variance-standardized form (textbook-t scaled by sqrt((nu-2)/nu)); the
skewed-t is Hansen's standardized skewed Student-t with tail parameter nu
and skewness lambda in (-1, 1):

    c   = Gamma((nu+1)/2) / (sqrt(pi*(nu-2)) * Gamma(nu/2))
    a   = 4*lam*c*(nu-2)/(nu-1)
    b^2 = 1 + 3*lam^2 - a^2

    g(z) = b*c * (1 + ((b*z+a)/(1-lam))^2/(nu-2))^(-(nu+1)/2)   z < -a/b
    g(z) = b*c * (1 + ((b*z+a)/(1+lam))^2/(nu-2))^(-(nu+1)/2)   z >= -a/b

lambda = 0 collapses to the standardized Student-t; the two branches agree
at the switch point z = -a/b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, stdtr, stdtrit

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

KINDS = ("normal", "student_t", "skew_t")


class DistError(ValueError):
    """Raised for invalid distribution parameters or evaluation points."""


@dataclass(frozen=True)
class InnovationDist:
    """An innovation law: kind plus shape parameters where applicable.

    nu is required (> 2) for the t kinds; lam is required in (-1, 1) for
    skew_t. The normal carries no shape parameters.
    """

    kind: str
    nu: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DistError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "normal":
            if self.nu is not None or self.lam is not None:
                raise DistError("normal distribution takes no shape parameters")
            return
        if self.nu is None or not self.nu > 2:
            raise DistError(f"nu must be > 2, got {self.nu}")
        if self.kind == "student_t":
            if self.lam is not None:
                raise DistError("student_t takes no skewness parameter")
        else:
            if self.lam is None or not -1 < self.lam < 1:
                raise DistError(f"lambda must lie in (-1, 1), got {self.lam}")

    @property
    def n_shape_params(self) -> int:
        return {"normal": 0, "student_t": 1, "skew_t": 2}[self.kind]


def normal() -> InnovationDist:
    return InnovationDist("normal")


def student_t(nu: float) -> InnovationDist:
    return InnovationDist("student_t", nu=nu)


def skew_t(nu: float, lam: float) -> InnovationDist:
    return InnovationDist("skew_t", nu=nu, lam=lam)


def _t_log_norm_const(nu: float) -> float:
    # log c for the variance-standardized Student-t density
    return (
        math.lgamma((nu + 1.0) / 2.0)
        - math.lgamma(nu / 2.0)
        - 0.5 * math.log(math.pi * (nu - 2.0))
    )


def _hansen_consts(nu: float, lam: float) -> tuple:
    logc = _t_log_norm_const(nu)
    c = math.exp(logc)
    a = 4.0 * lam * c * (nu - 2.0) / (nu - 1.0)
    b = math.sqrt(1.0 + 3.0 * lam * lam - a * a)
    return a, b, c, logc


def log_density(z, dist: InnovationDist):
    """Log of the standardized density at z (scalar or array)."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DistError("log_density requires finite z")
    if dist.kind == "normal":
        out = -0.5 * z * z - _LOG_SQRT_2PI
    elif dist.kind == "student_t":
        nu = dist.nu
        logc = _t_log_norm_const(nu)
        out = logc - 0.5 * (nu + 1.0) * np.log1p(z * z / (nu - 2.0))
    else:
        nu, lam = dist.nu, dist.lam
        a, b, _, logc = _hansen_consts(nu, lam)
        denom = np.where(z < -a / b, 1.0 - lam, 1.0 + lam)
        u = (b * z + a) / denom
        out = math.log(b) + logc - 0.5 * (nu + 1.0) * np.log1p(u * u / (nu - 2.0))
    return out if out.ndim else float(out)


def _t_std_cdf(u, nu: float):
    # CDF of the variance-standardized Student-t
    return stdtr(nu, np.asarray(u, dtype=float) * math.sqrt(nu / (nu - 2.0)))


def cdf(z, dist: InnovationDist):
    """Cumulative distribution function at z (scalar or array)."""
    z = np.asarray(z, dtype=float)
    if dist.kind == "normal":
        out = ndtr(z)
    elif dist.kind == "student_t":
        out = _t_std_cdf(z, dist.nu)
    else:
        nu, lam = dist.nu, dist.lam
        a, b, _, _ = _hansen_consts(nu, lam)
        w = b * z + a
        left = (1.0 - lam) * _t_std_cdf(w / (1.0 - lam), nu)
        right = (1.0 - lam) / 2.0 + (1.0 + lam) * (_t_std_cdf(w / (1.0 + lam), nu) - 0.5)
        out = np.where(z < -a / b, left, right)
    return out if out.ndim else float(out)


def abs_moment(dist: InnovationDist) -> float:
    """E|Z| of the standardized distribution (closed form for all kinds).

    For the skewed-t, split E|Z| = 2 * int_0^inf z g(z) dz (the mean is
    zero) and integrate the right branch after substituting
    u = (b z + a)/(1 + lam); the density g(z; lam) mirrors to g(-z; -lam),
    so only |lam| matters.
    """
    if dist.kind == "normal":
        return SQRT_2_OVER_PI
    nu = dist.nu
    c = math.exp(_t_log_norm_const(nu))
    if dist.kind == "student_t":
        return 2.0 * c * (nu - 2.0) / (nu - 1.0)
    lam = abs(dist.lam)
    a, b, c, _ = _hansen_consts(nu, lam)
    u0 = a / (1.0 + lam)
    w0 = 1.0 + u0 * u0 / (nu - 2.0)
    tail = (nu - 2.0) / (nu - 1.0) * w0 ** ((1.0 - nu) / 2.0)
    upper_mass = (1.0 - float(_t_std_cdf(u0, nu))) / c
    return 2.0 * c * (1.0 + lam) / b * ((1.0 + lam) * tail - a * upper_mass)


def _skew_t_ppf_bisect(u: np.ndarray, dist: InnovationDist) -> np.ndarray:
    # Vectorized bisection on the CDF; deterministic across platforms.
    lo = np.full_like(u, -10.0)
    hi = np.full_like(u, 10.0)
    for _ in range(200):
        need = cdf(lo, dist) > u
        if not np.any(need):
            break
        lo[need] *= 2.0
    for _ in range(200):
        need = cdf(hi, dist) < u
        if not np.any(need):
            break
        hi[need] *= 2.0
    while np.max(hi - lo) > 1e-12:
        mid = 0.5 * (lo + hi)
        below = cdf(mid, dist) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample(dist: InnovationDist, n: int, seed: int) -> np.ndarray:
    """Draw n standardized innovations, deterministic for a fixed seed."""
    if n < 1:
        raise DistError("n must be positive")
    rng = np.random.default_rng(seed)
    if dist.kind == "normal":
        return rng.standard_normal(n)
    u = np.clip(rng.random(n), 1e-12, 1.0 - 1e-12)
    if dist.kind == "student_t":
        nu = dist.nu
        return stdtrit(nu, u) * math.sqrt((nu - 2.0) / nu)
    return _skew_t_ppf_bisect(u, dist)
