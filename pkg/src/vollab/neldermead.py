"""Derivative-free minimization: Nelder-Mead simplex plus a golden-section polish.

Both routines are fully deterministic: no randomness, stable tie-breaking,
and fixed iteration rules, so repeated runs from the same start produce
bit-identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    n_evals: int
    converged: bool


def nelder_mead(
    f,
    x0,
    step: float = 0.25,
    diameter_tol: float = 1e-8,
    max_iter: int = 2000,
) -> SimplexResult:
    """Minimize f from x0 with the Nelder-Mead simplex.

    The initial simplex is x0 plus `step` along each coordinate. Converged
    means the simplex diameter (max distance from the best vertex) fell
    below diameter_tol before max_iter iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    verts = np.tile(x0, (n + 1, 1))
    for i in range(n):
        verts[i + 1, i] += step
    fvals = np.array([f(v) for v in verts])
    n_evals = n + 1

    rho, chi, psi, sigma = 1.0, 2.0, 0.5, 0.5
    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(fvals, kind="stable")
        verts = verts[order]
        fvals = fvals[order]
        diameter = float(np.max(np.linalg.norm(verts[1:] - verts[0], axis=1)))
        if diameter < diameter_tol:
            converged = True
            break
        iterations += 1

        centroid = np.mean(verts[:-1], axis=0)
        xr = centroid + rho * (centroid - verts[-1])
        fr = f(xr)
        n_evals += 1
        if fr < fvals[0]:
            xe = centroid + chi * (centroid - verts[-1])
            fe = f(xe)
            n_evals += 1
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + psi * (centroid - verts[-1])
                fc = f(xc)
                n_evals += 1
                if fc <= fr:
                    verts[-1], fvals[-1] = xc, fc
                else:
                    verts, fvals, n_evals = _shrink(f, verts, fvals, sigma, n_evals)
            else:
                xc = centroid - psi * (centroid - verts[-1])
                fc = f(xc)
                n_evals += 1
                if fc < fvals[-1]:
                    verts[-1], fvals[-1] = xc, fc
                else:
                    verts, fvals, n_evals = _shrink(f, verts, fvals, sigma, n_evals)

    best = int(np.argmin(fvals))
    return SimplexResult(
        x=verts[best].copy(),
        fun=float(fvals[best]),
        iterations=iterations,
        n_evals=n_evals,
        converged=converged,
    )


def _shrink(f, verts, fvals, sigma, n_evals):
    for i in range(1, verts.shape[0]):
        verts[i] = verts[0] + sigma * (verts[i] - verts[0])
        fvals[i] = f(verts[i])
        n_evals += 1
    return verts, fvals, n_evals


def golden_section(f, lo: float, hi: float, tol: float) -> tuple:
    """Minimize a 1-d function on [lo, hi]; returns (x, f(x), n_evals)."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    n_evals = 2
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        n_evals += 1
    if fc < fd:
        return c, fc, n_evals
    return d, fd, n_evals


def golden_polish(
    f,
    x,
    fx: float | None = None,
    radius: float = 0.02,
    passes: int = 3,
    tol: float = 1e-11,
) -> tuple:
    """Coordinate-wise golden-section refinement around x.

    Each pass line-minimizes every coordinate over [x_i - r, x_i + r] and
    shrinks r tenfold; a move is kept only if it improves f. Returns
    (x, f(x), n_evals).
    """
    x = np.asarray(x, dtype=float).copy()
    if fx is None:
        fx = f(x)
    n_evals = 0
    r = radius
    for _ in range(passes):
        for i in range(x.size):
            xi = x[i]

            def along(v, i=i):
                trial = x.copy()
                trial[i] = v
                return f(trial)

            v, fv, used = golden_section(along, xi - r, xi + r, tol)
            n_evals += used
            if fv < fx:
                x[i], fx = v, fv
        r *= 0.1
    return x, float(fx), n_evals
