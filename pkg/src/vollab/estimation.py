"""Maximum-likelihood fitting of the GARCH families with inference and BIC.

Fitting maximizes the log-likelihood in a smooth unconstrained space and
maps back to the natural coefficients:

    omega         exp(theta)                    (identity for egarch)
    (alpha, beta) logistic split of a persistence p < 1 - 1e-6
    gamma (gjr)   softmax share of the same persistence budget (so
                  alpha + gamma/2 + beta stays inside the simplex)
    beta (egarch) (1 - 1e-6) * tanh(theta)
    nu            2 + exp(theta)
    lambda        tanh(theta)

The optimizer is Nelder-Mead (simplex diameter < 1e-8 or 2000 iterations)
followed by a coordinate-wise golden-section polish; everything is
deterministic, so identical inputs give identical fits. Standard errors
come from the inverse negative Hessian in the transformed space, pushed to
the natural coefficients with a delta-method Jacobian; p-values use the
large-sample normal approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .dist import DistError, InnovationDist
from .garch import (
    GarchError,
    GarchParams,
    GarchSpec,
    log_likelihood,
    stationarity_margin,
)
from .market_data import ReturnSeries
from .neldermead import golden_polish, nelder_mead

_MARGIN = 1e-6
_PENALTY = 1e12

DIST_TOKENS = {"normal": "normal", "student_t": "t", "skew_t": "skewt"}
DIST_KINDS = {v: k for k, v in DIST_TOKENS.items()}

FIT_DOCUMENT_VERSION = 1


class EstimationError(ValueError):
    """Raised for unfittable inputs or invalid estimation requests."""


@dataclass(frozen=True)
class FitOptions:
    diameter_tol: float = 1e-8
    max_iter: int = 2000
    simplex_step: float = 0.25
    polish_radius: float = 0.02
    polish_passes: int = 3
    polish_tol: float = 1e-11
    hessian_rel_step: float = 1e-4
    # reference scale for the first-order-condition diagnostic: a converged
    # fit should have max |numerical gradient| below 10x this value. A
    # value-comparing optimizer cannot push the gradient below
    # ~sqrt(Hessian * eps * |loglik|), so this is coarser than diameter_tol.
    grad_tol: float = 1e-4


@dataclass(frozen=True)
class FitResult:
    """Fitted model: coefficients, likelihood, BIC, and inference output."""

    spec: GarchSpec
    params: GarchParams
    loglik: float
    bic: float
    n_obs: int
    k: int
    converged: bool
    iterations: int
    margin: float
    stderr: dict | None = None
    p_values: dict | None = None
    theta: np.ndarray | None = None
    stderr_note: str = ""


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _softmax3(t1: float, t2: float) -> tuple:
    m = max(t1, t2, 0.0)
    e1, e2, e3 = math.exp(t1 - m), math.exp(t2 - m), math.exp(-m)
    total = e1 + e2 + e3
    return e1 / total, e2 / total, e3 / total


class _Transform:
    """Bijection between the unconstrained optimizer space and coefficients."""

    def __init__(self, spec: GarchSpec):
        self.spec = spec
        self.family = spec.family
        self.kind = spec.dist.kind
        self.names = spec.param_names()
        self.dim = spec.n_params

    def to_natural(self, theta) -> tuple:
        fam = self.family
        mu = float(theta[0])
        if fam == "garch":
            omega = math.exp(theta[1])
            p = (1.0 - _MARGIN) * _sigmoid(theta[2])
            s = _sigmoid(theta[3])
            alpha, gamma, beta = p * s, 0.0, p * (1.0 - s)
            tail = 4
        elif fam == "gjr":
            omega = math.exp(theta[1])
            p = (1.0 - _MARGIN) * _sigmoid(theta[2])
            w_a, w_g, w_b = _softmax3(theta[3], theta[4])
            alpha, gamma, beta = p * w_a, 2.0 * p * w_g, p * w_b
            tail = 5
        else:
            omega = float(theta[1])
            alpha = float(theta[2])
            gamma = float(theta[3])
            beta = (1.0 - _MARGIN) * math.tanh(theta[4])
            tail = 5

        if self.kind == "normal":
            dist = InnovationDist("normal")
        else:
            nu = 2.0 + math.exp(theta[tail])
            if self.kind == "student_t":
                dist = InnovationDist("student_t", nu=nu)
            else:
                lam = max(min(math.tanh(theta[tail + 1]), 1.0 - 1e-10), -1.0 + 1e-10)
                dist = InnovationDist("skew_t", nu=nu, lam=lam)
        params = GarchParams(mu=mu, omega=omega, alpha=alpha, beta=beta, gamma=gamma)
        return params, dist

    def natural_vector(self, theta) -> np.ndarray:
        params, dist = self.to_natural(theta)
        values = [params.mu, params.omega, params.alpha]
        if self.family != "garch":
            values.append(params.gamma)
        values.append(params.beta)
        if dist.nu is not None:
            values.append(dist.nu)
        if dist.lam is not None:
            values.append(dist.lam)
        return np.array(values)

    def start_theta(self, returns: ReturnSeries) -> np.ndarray:
        mu0 = float(np.mean(returns.values))
        var0 = float(np.var(returns.values))
        if self.family == "garch":
            p0, s0 = 0.90, 0.05 / 0.90
            theta = [mu0, math.log(0.1 * var0), _logit(p0 / (1.0 - _MARGIN)), _logit(s0)]
        elif self.family == "gjr":
            p0 = 0.05 + 0.025 + 0.85
            theta = [
                mu0,
                math.log(0.1 * var0),
                _logit(p0 / (1.0 - _MARGIN)),
                math.log(0.05 / 0.85),
                math.log(0.025 / 0.85),
            ]
        else:
            # start at the same unconditional level: omega/(1-beta) = ln(var)
            theta = [mu0, 0.15 * math.log(var0), 0.05, 0.05, math.atanh(0.85 / (1.0 - _MARGIN))]
        if self.kind in ("student_t", "skew_t"):
            theta.append(math.log(8.0 - 2.0))
        if self.kind == "skew_t":
            theta.append(0.0)
        return np.array(theta)


def bic(loglik: float, n: int, k: int) -> float:
    """Bayesian information criterion: -2*loglik + ln(n)*k. Lower is better."""
    if n < 1 or k < 1:
        raise EstimationError("bic requires n >= 1 and k >= 1")
    return -2.0 * loglik + math.log(n) * k


def p_value(estimate: float, stderr: float) -> float:
    """Two-sided normal-tail p-value of the z-statistic estimate/stderr."""
    if stderr == 0.0:
        return 1.0 if estimate == 0.0 else 0.0
    return 2.0 * (1.0 - float(ndtr(abs(estimate / stderr))))


def fit(
    spec: GarchSpec, returns: ReturnSeries, options: FitOptions | None = None
) -> FitResult:
    """Fit a GARCH-family model by maximum likelihood.

    Starting values follow the persistence-heavy convention (alpha 0.05,
    beta 0.85, unconditional variance at the sample variance; nu 8 and
    lambda 0 for the t kinds regardless of shapes on the incoming spec).
    A non-converged run returns converged=False with the best point found.
    """
    options = options or FitOptions()
    n = len(returns)
    if n < 50:
        raise EstimationError(f"need at least 50 observations to fit, got {n}")
    values = returns.values
    if not np.all(np.isfinite(values)):
        raise EstimationError("returns contain non-finite values")
    if np.var(values) <= 0.0:
        raise EstimationError("degenerate data: returns have zero variance")

    tr = _Transform(spec)

    def neg_ll(theta):
        if not np.all(np.isfinite(theta)):
            return _PENALTY
        try:
            params, d = tr.to_natural(theta)
            return -log_likelihood(replace(spec, dist=d), params, returns)
        except (GarchError, DistError, OverflowError, ZeroDivisionError):
            return _PENALTY

    sim = nelder_mead(
        neg_ll,
        tr.start_theta(returns),
        step=options.simplex_step,
        diameter_tol=options.diameter_tol,
        max_iter=options.max_iter,
    )
    theta, best, _ = golden_polish(
        neg_ll,
        sim.x,
        sim.fun,
        radius=options.polish_radius,
        passes=options.polish_passes,
        tol=options.polish_tol,
    )
    params, fitted_dist = tr.to_natural(theta)
    fitted_spec = replace(spec, dist=fitted_dist)
    loglik = -best
    if not math.isfinite(loglik):
        raise EstimationError("optimizer failed to find a finite likelihood")
    result = FitResult(
        spec=fitted_spec,
        params=params,
        loglik=loglik,
        bic=bic(loglik, n, spec.n_params),
        n_obs=n,
        k=spec.n_params,
        converged=sim.converged,
        iterations=sim.iterations,
        margin=stationarity_margin(fitted_spec, params),
        theta=theta,
    )
    if result.converged:
        result = infer(result, returns, options)
    return result


def infer(
    fit_result: FitResult, returns: ReturnSeries, options: FitOptions | None = None
) -> FitResult:
    """Populate standard errors and two-sided normal p-values on a fit.

    The Hessian of the log-likelihood is taken by central differences in
    the transformed space (step max(1e-4, 1e-4*|theta_i|)); its negative
    inverse is pushed through the transform Jacobian (delta method). A
    non-positive-definite Hessian leaves stderr unavailable with a note.
    """
    if not fit_result.converged:
        raise EstimationError("inference requires a converged fit")
    if fit_result.theta is None:
        raise EstimationError("fit carries no optimizer state (loaded from document?)")
    options = options or FitOptions()
    spec = fit_result.spec
    tr = _Transform(spec)
    theta = fit_result.theta
    dim = theta.size

    def ll(th):
        params, d = tr.to_natural(th)
        return log_likelihood(replace(spec, dist=d), params, returns)

    h = np.maximum(options.hessian_rel_step, options.hessian_rel_step * np.abs(theta))
    eye = np.eye(dim)
    f0 = ll(theta)
    hess = np.empty((dim, dim))
    for i in range(dim):
        hi = h[i] * eye[i]
        hess[i, i] = (ll(theta + hi) - 2.0 * f0 + ll(theta - hi)) / (h[i] * h[i])
        for j in range(i + 1, dim):
            hj = h[j] * eye[j]
            hess[i, j] = hess[j, i] = (
                ll(theta + hi + hj)
                - ll(theta + hi - hj)
                - ll(theta - hi + hj)
                + ll(theta - hi - hj)
            ) / (4.0 * h[i] * h[j])

    neg_hess = -hess
    try:
        np.linalg.cholesky(neg_hess)
        cov_theta = np.linalg.inv(neg_hess)
    except np.linalg.LinAlgError:
        return replace(
            fit_result,
            stderr=None,
            p_values=None,
            stderr_note="negative Hessian is not positive definite; standard errors unavailable",
        )

    jac = np.empty((len(tr.names), dim))
    for j in range(dim):
        hj = h[j] * eye[j]
        jac[:, j] = (tr.natural_vector(theta + hj) - tr.natural_vector(theta - hj)) / (
            2.0 * h[j]
        )
    cov_nat = jac @ cov_theta @ jac.T
    variances = np.diag(cov_nat)
    if np.any(variances < 0):
        return replace(
            fit_result,
            stderr=None,
            p_values=None,
            stderr_note="delta-method variance went negative; standard errors unavailable",
        )
    se = np.sqrt(variances)
    est = tr.natural_vector(theta)
    pvals = np.array([p_value(e, s) for e, s in zip(est, se)])
    return replace(
        fit_result,
        stderr=dict(zip(tr.names, se.tolist())),
        p_values=dict(zip(tr.names, pvals.tolist())),
        stderr_note="",
    )


def best_order(candidates) -> tuple:
    """Lowest-BIC (p, q) from (p, q, bic) triples; ties prefer small p+q, then p."""
    chosen = min(candidates, key=lambda c: (c[2], c[0] + c[1], c[0]))
    return chosen[0], chosen[1]


def select_order(
    returns: ReturnSeries,
    family: str,
    p_grid,
    q_grid,
    dist: InnovationDist | None = None,
    options: FitOptions | None = None,
) -> tuple:
    """Pick (p, q) on a grid by lowest BIC; only (1,1) recursions can fit.

    Other grid points appear in the table marked "unsupported order". Ties
    break to smaller p+q, then smaller p. Returns (p, q, rows) where rows
    are dicts with keys p, q, bic, status.
    """
    p_grid = list(p_grid)
    q_grid = list(q_grid)
    if not p_grid or not q_grid:
        raise EstimationError("order grids must be nonempty")
    dist = dist or InnovationDist("normal")
    rows = []
    candidates = []
    for p in p_grid:
        for q in q_grid:
            if (p, q) != (1, 1):
                rows.append({"p": p, "q": q, "bic": None, "status": "unsupported order"})
                continue
            try:
                result = fit(GarchSpec(family, dist, p=p, q=q), returns, options)
            except (EstimationError, GarchError) as exc:
                rows.append({"p": p, "q": q, "bic": None, "status": f"failed: {exc}"})
                continue
            status = "ok" if result.converged else "not converged"
            rows.append({"p": p, "q": q, "bic": result.bic, "status": status})
            if result.converged:
                candidates.append((p, q, result.bic))
    if not candidates:
        raise EstimationError("no candidate order could be fitted")
    p_best, q_best = best_order(candidates)
    return p_best, q_best, rows


def fit_document(fit_result: FitResult) -> str:
    """Serialize a fit to the versioned key-value text format."""
    spec = fit_result.spec
    lines = [
        f"version = {FIT_DOCUMENT_VERSION}",
        f"family = {spec.family}",
        f"dist = {DIST_TOKENS[spec.dist.kind]}",
    ]
    p = fit_result.params
    lines += [
        f"mu = {p.mu!r}",
        f"omega = {p.omega!r}",
        f"alpha = {p.alpha!r}",
        f"gamma = {p.gamma!r}",
        f"beta = {p.beta!r}",
    ]
    if spec.dist.nu is not None:
        lines.append(f"nu = {spec.dist.nu!r}")
    if spec.dist.lam is not None:
        lines.append(f"lambda = {spec.dist.lam!r}")
    lines += [
        f"loglik = {fit_result.loglik!r}",
        f"bic = {fit_result.bic!r}",
        f"n_obs = {fit_result.n_obs}",
        f"k = {fit_result.k}",
        f"converged = {'true' if fit_result.converged else 'false'}",
    ]
    if fit_result.stderr is not None:
        for name in fit_result.stderr:
            lines.append(f"stderr.{name} = {fit_result.stderr[name]!r}")
        for name in fit_result.p_values:
            lines.append(f"p.{name} = {fit_result.p_values[name]!r}")
    return "\n".join(lines) + "\n"


def write_fit_document(fit_result: FitResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(fit_document(fit_result))


def read_fit_document(path) -> FitResult:
    """Parse a fit document back into a FitResult (without optimizer state)."""
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise EstimationError(f"{path}: line {lineno} is not 'key = value'")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    try:
        version = int(fields["version"])
        if version != FIT_DOCUMENT_VERSION:
            raise EstimationError(f"{path}: unsupported document version {version}")
        kind = DIST_KINDS[fields["dist"]]
        nu = float(fields["nu"]) if "nu" in fields else None
        lam = float(fields["lambda"]) if "lambda" in fields else None
        dist = InnovationDist(kind, nu=nu, lam=lam)
        spec = GarchSpec(fields["family"], dist)
        params = GarchParams(
            mu=float(fields["mu"]),
            omega=float(fields["omega"]),
            alpha=float(fields["alpha"]),
            beta=float(fields["beta"]),
            gamma=float(fields["gamma"]),
        )
        names = spec.param_names()
        stderr = None
        p_values = None
        if any(key.startswith("stderr.") for key in fields):
            stderr = {name: float(fields[f"stderr.{name}"]) for name in names}
            p_values = {name: float(fields[f"p.{name}"]) for name in names}
        return FitResult(
            spec=spec,
            params=params,
            loglik=float(fields["loglik"]),
            bic=float(fields["bic"]),
            n_obs=int(fields["n_obs"]),
            k=int(fields["k"]),
            converged=fields["converged"] == "true",
            iterations=0,
            margin=stationarity_margin(spec, params),
            stderr=stderr,
            p_values=p_values,
        )
    except KeyError as exc:
        raise EstimationError(f"{path}: missing field {exc}") from None
