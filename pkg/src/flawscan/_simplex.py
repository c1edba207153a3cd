"""Small bounded Nelder-Mead minimizer.

Written in-house instead of using scipy so the caller controls the exact
iteration budget (the "short run" schedule) and can resume from a returned
simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nit: int
    converged: bool
    simplex: np.ndarray
    values: np.ndarray


def initial_simplex(x0, step):
    x0 = np.asarray(x0, dtype=np.float64)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), x0.shape)
    pts = np.tile(x0, (x0.size + 1, 1))
    pts[1:] += np.diag(step)
    return pts


def nelder_mead(fun, simplex, values=None, lower=None, upper=None, max_iter=200, rtol=1e-6):
    """Minimize ``fun`` starting from ``simplex`` (shape ``(n + 1, n)``).

    Trial points are clipped to ``[lower, upper]``. Iteration stops when the
    spread of function values over the simplex is at most ``rtol`` relative to
    the best value, or after ``max_iter`` iterations.
    """
    pts = np.array(simplex, dtype=np.float64)
    n = pts.shape[1]
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=np.float64)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=np.float64)
    pts = np.clip(pts, lo, hi)
    if values is None:
        fv = np.array([fun(p) for p in pts])
    else:
        fv = np.array(values, dtype=np.float64)

    def spread_ok():
        best, worst = fv[0], fv[-1]
        if not np.isfinite(worst):
            return False
        return abs(worst - best) <= rtol * max(abs(best), 1e-300)

    order = np.argsort(fv, kind="stable")
    pts, fv = pts[order], fv[order]
    nit = 0
    converged = spread_ok()
    while not converged and nit < max_iter:
        nit += 1
        centroid = pts[:-1].mean(axis=0)
        xr = np.clip(centroid + (centroid - pts[-1]), lo, hi)
        fr = fun(xr)
        if fr < fv[0]:
            xe = np.clip(centroid + 2.0 * (centroid - pts[-1]), lo, hi)
            fe = fun(xe)
            if fe < fr:
                pts[-1], fv[-1] = xe, fe
            else:
                pts[-1], fv[-1] = xr, fr
        elif fr < fv[-2]:
            pts[-1], fv[-1] = xr, fr
        else:
            if fr < fv[-1]:
                xc = np.clip(centroid + 0.5 * (xr - centroid), lo, hi)
            else:
                xc = np.clip(centroid + 0.5 * (pts[-1] - centroid), lo, hi)
            fc = fun(xc)
            if fc < min(fr, fv[-1]):
                pts[-1], fv[-1] = xc, fc
            else:
                pts[1:] = pts[0] + 0.5 * (pts[1:] - pts[0])
                fv[1:] = [fun(p) for p in pts[1:]]
        order = np.argsort(fv, kind="stable")
        pts, fv = pts[order], fv[order]
        converged = spread_ok()
    return SimplexResult(
        x=pts[0].copy(), fun=float(fv[0]), nit=nit, converged=converged, simplex=pts, values=fv
    )
