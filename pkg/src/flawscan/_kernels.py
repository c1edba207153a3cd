"""Compiled inner loop for the volume criterion (mean bias only)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def volumes(dx, dy, y, total, a, b, theta, lam, rect):
    """Volume for each (a[k], b[k], theta[k]); ``-inf`` where degenerate.

    The membership arithmetic mirrors :func:`flawscan.geometry.membership`
    so that pixel sets agree with ``Region.mask``.
    """
    n = y.size
    out = np.empty(a.size)
    inside = np.empty(n, dtype=np.bool_)
    for k in range(a.size):
        c = math.cos(theta[k])
        s = math.sin(theta[k])
        ak = a[k]
        bk = b[k]
        n_in = 0
        s_in = 0.0
        for i in range(n):
            xr = dx[i] * c + dy[i] * s
            yr = dy[i] * c - dx[i] * s
            if rect:
                hit = abs(xr) <= ak and abs(yr) <= bk
            else:
                hit = (xr / ak) ** 2 + (yr / bk) ** 2 <= 1.0
            inside[i] = hit
            if hit:
                n_in += 1
                s_in += y[i]
        if n_in == 0 or n_in == n:
            out[k] = -np.inf
            continue
        mu = (total - s_in) / (n - n_in)
        acc = 0.0
        for i in range(n):
            if inside[i]:
                yc = y[i] - mu
                if yc > 0:
                    acc += yc
                else:
                    acc += lam * yc
        out[k] = acc
    return out
