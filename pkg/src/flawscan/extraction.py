"""Optimal region extraction and SNR features.

The inner region around a hotspot is chosen by maximizing a regularized
"volume": the sum of bias-corrected intensities inside the region, with
non-positive corrected intensities weighted by ``lam`` so that noise pixels
are penalized. An outer region of twice the area supplies the noise
statistics for the SNR.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import ndtr

from ._kernels import volumes as _volumes_kernel
from ._simplex import initial_simplex, nelder_mead
from .exceptions import (
    DegenerateRegionError,
    ExtractionError,
    ParameterError,
    UndefinedSNRError,
)
from .geometry import RegionPair, make_outer, make_region, membership
from .imagery import check_image, estimate_bias

__all__ = [
    "VolumeConfig",
    "Indication",
    "volume",
    "contribution",
    "expected_volume",
    "h_xi",
    "lambda_xi",
    "optimize_region",
    "optimize_ellipse",
    "extract_features",
    "find_candidates",
    "detect_indications",
    "merge_pairs",
    "scan_image",
    "best_indication",
]

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class VolumeConfig:
    """Settings for the volume maximization.

    ``a_max=None`` means half the smaller image dimension. The same
    ``[a_min, a_max]`` interval bounds both half-extents. Setting
    ``fixed_theta`` removes the orientation from the search (e.g. ``0.0`` for
    axis-aligned rectangles).
    """

    lam: float = 100.0
    a_min: float = 1.0
    a_max: Optional[float] = None
    grid_size: int = 10
    n_starts: int = 5
    short_iter: int = 10
    rtol: float = 1e-6
    max_iter: int = 200
    bias: str = "mean"
    fixed_theta: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 1:
            raise ParameterError(f"lam must exceed 1, got {self.lam}")
        if self.a_min < 0.5:
            raise ParameterError(f"a_min must be at least 0.5, got {self.a_min}")
        if self.a_max is not None and self.a_max <= self.a_min:
            raise ParameterError("a_max must exceed a_min")
        for name in ("grid_size", "n_starts", "short_iter", "max_iter"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.bias not in ("mean", "median"):
            raise ParameterError(f"unknown bias estimator {self.bias!r}")

    def bounds(self, shape):
        a_max = self.a_max if self.a_max is not None else min(shape) / 2.0
        a_max = min(a_max, float(max(shape)))
        if a_max <= self.a_min:
            raise ParameterError(f"image {shape} too small for a_min={self.a_min}")
        return self.a_min, a_max


@dataclass(frozen=True)
class Indication:
    """One candidate flaw with its regions and SNR features.

    Intensities are bias-corrected by ``bias``, the mean of the pixels
    outside the inner region.
    """

    pair: RegionPair
    signal_peak: float
    noise_peak: float
    noise_mean: float
    snr: float
    bias: float
    volume: float = float("nan")
    scaled_amplitude: float = 1.0
    center: Tuple[float, float] = (float("nan"), float("nan"))
    clipped_fraction: float = 0.0
    id: int = 0
    merged_from: Optional[Tuple[int, int]] = None

    @property
    def region(self):
        return self.pair.inner

    def to_dict(self):
        return {
            "id": self.id,
            "center": list(self.center),
            "inner": self.pair.inner.to_dict(),
            "outer": self.pair.outer.to_dict(),
            "delta": self.pair.delta,
            "signal_peak": self.signal_peak,
            "noise_peak": self.noise_peak,
            "noise_mean": self.noise_mean,
            "snr": self.snr,
            "bias": self.bias,
            "volume": self.volume,
            "scaled_amplitude": self.scaled_amplitude,
            "clipped_fraction": self.clipped_fraction,
            "merged_from": list(self.merged_from) if self.merged_from else None,
        }


# ---------------------------------------------------------------------------
# volume criterion


def _bias_outside(values, inside, method):
    outside = values[~inside]
    if method == "median":
        return float(np.median(outside))
    return float(outside.mean())


def volume(img, inner, lam, bias="mean"):
    """Regularized volume of ``inner`` on ``img``.

    Intensities are corrected by the bias estimated outside the region; positive
    corrected values inside count once, non-positive ones ``lam`` times.

    Raises
    ------
    DegenerateRegionError
        If the region or its complement contains no pixel.
    """
    img = check_image(img)
    inside = inner.mask(img.shape)
    n_in = int(inside.sum())
    if n_in == 0 or n_in == img.size:
        raise DegenerateRegionError(f"region covers {n_in} of {img.size} pixels")
    mu = _bias_outside(img, inside, bias)
    yc = img[inside] - mu
    return float(yc[yc > 0].sum() + lam * yc[yc <= 0].sum())


class _VolumeSurface:
    """Volume as a function of (a, b, theta) for a fixed center and image."""

    def __init__(self, img, center, shape, lam, bias="mean"):
        n_rows, n_cols = img.shape
        vv, uu = np.mgrid[0:n_rows, 0:n_cols]
        self.dx = (uu.ravel() - center[0]).astype(np.float64)
        self.dy = (vv.ravel() - center[1]).astype(np.float64)
        self.y = img.ravel()
        self.total = float(self.y.sum())
        self.n = self.y.size
        self.shape = shape
        self.lam = lam
        self.bias = bias

    def __call__(self, a, b, theta):
        if self.bias == "median":
            return self._median_volume(a, b, theta)
        one = np.array([0.0])
        return float(self.batch(one + a, one + b, one + theta)[0])

    def _median_volume(self, a, b, theta):
        inside = membership(self.shape, self.dx, self.dy, a, b, theta)
        n_in = int(inside.sum())
        if n_in == 0 or n_in == self.n:
            return -np.inf
        yc = self.y[inside] - float(np.median(self.y[~inside]))
        return float(yc[yc > 0].sum() + self.lam * yc[yc <= 0].sum())

    def batch(self, a, b, theta):
        if self.bias == "median":
            return np.array([self._median_volume(*p) for p in zip(a, b, theta)])
        return _volumes_kernel(
            self.dx, self.dy, self.y, self.total,
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
            np.ascontiguousarray(theta, dtype=np.float64),
            float(self.lam), self.shape == "rectangle",
        )


# ---------------------------------------------------------------------------
# expected volume and the choice of lam


def contribution(t, sigma, lam):
    """Expected volume contribution of a pixel with true signal ``t``.

    ``t + (lam - 1) * (t * Phi(-t/sigma) - sigma * phi(-t/sigma))``.
    """
    t = np.asarray(t, dtype=np.float64)
    z = -t / sigma
    pdf = np.exp(-0.5 * z * z) / _SQRT_2PI
    return t + (lam - 1.0) * (t * ndtr(z) - sigma * pdf)


def expected_volume(tau, sigma, lam, inner):
    """Expected volume of ``inner`` when the image is ``tau`` plus N(0, sigma^2) noise."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    tau = check_image(tau, "tau")
    inside = inner.mask(tau.shape)
    return float(contribution(tau[inside], sigma, lam).sum())


def h_xi(lam, xi):
    """Scaled contribution of a pixel at contrast ``xi``; its root in ``lam`` is ``lambda_xi``."""
    q = ndtr(-xi)
    pdf = math.exp(-0.5 * xi * xi) / _SQRT_2PI
    return xi * (1.0 + (lam - 1.0) * q) - (lam - 1.0) * pdf


def lambda_xi(xi):
    """Largest ``lam`` keeping every pixel of contrast ``>= xi`` a positive contributor."""
    xi = float(xi)
    if not xi > 0:
        raise ParameterError(f"xi must be positive, got {xi}")
    pdf = math.exp(-0.5 * xi * xi) / _SQRT_2PI
    return xi / (pdf - xi * float(ndtr(-xi))) + 1.0


# ---------------------------------------------------------------------------
# optimization


def optimize_region(img, center, cfg=None, shape="ellipse", a_bounds=None):
    """Maximize the volume over (a, b, theta) with the region anchored at ``center``.

    A ``grid_size**3`` grid over (a, b, theta) is evaluated first; the
    ``n_starts`` best points each get ``short_iter`` simplex iterations, and
    the best of those is run to convergence.

    Returns
    -------
    region : Region
        Canonical (``a >= b``, ``theta`` in ``[0, pi)``).
    volume : float
    """
    cfg = cfg or VolumeConfig()
    img = check_image(img)
    lo, hi = a_bounds if a_bounds is not None else cfg.bounds(img.shape)
    surf = _VolumeSurface(img, center, shape, cfg.lam, cfg.bias)

    k = cfg.grid_size
    a_grid = np.linspace(lo, hi, k)
    if cfg.fixed_theta is None:
        th_grid = np.linspace(0.0, math.pi, k, endpoint=False)
    else:
        th_grid = np.array([float(cfg.fixed_theta)])
    A, B, T = np.meshgrid(a_grid, a_grid, th_grid, indexing="ij")
    A, B, T = A.ravel(), B.ravel(), T.ravel()
    vals = surf.batch(A, B, T)
    if not np.isfinite(vals).any():
        raise ExtractionError(f"every grid region at {center} is degenerate")

    order = np.argsort(-vals, kind="stable")[: cfg.n_starts]
    order = order[np.isfinite(vals[order])]
    step_ab = (hi - lo) / (k - 1) / 2.0 if k > 1 else (hi - lo) / 4.0
    if cfg.fixed_theta is None:
        steps = np.array([step_ab, step_ab, math.pi / k / 2.0])
        lower = np.array([lo, lo, -np.inf])
        upper = np.array([hi, hi, np.inf])

        def objective(p):
            return -surf(p[0], p[1], p[2])

        starts = [np.array([A[i], B[i], T[i]]) for i in order]
    else:
        steps = np.array([step_ab, step_ab])
        lower = np.array([lo, lo])
        upper = np.array([hi, hi])
        fixed = float(cfg.fixed_theta)

        def objective(p):
            return -surf(p[0], p[1], fixed)

        starts = [np.array([A[i], B[i]]) for i in order]

    best = None
    for x0 in starts:
        res = nelder_mead(
            objective,
            initial_simplex(x0, steps),
            lower=lower,
            upper=upper,
            max_iter=cfg.short_iter,
            rtol=cfg.rtol,
        )
        if best is None or res.fun < best.fun:
            best = res
    final = nelder_mead(
        objective, best.simplex, best.values, lower=lower, upper=upper,
        max_iter=cfg.max_iter, rtol=cfg.rtol,
    )
    a, b = final.x[:2]
    theta = final.x[2] if cfg.fixed_theta is None else cfg.fixed_theta
    region = make_region(shape, center[0], center[1], a, b, theta)
    v = surf(region.a, region.b, region.theta)
    if not np.isfinite(v):
        raise ExtractionError(f"optimized region at {center} is degenerate")
    return region, v


def optimize_ellipse(img, center, cfg=None):
    return optimize_region(img, center, cfg, shape="ellipse")


# ---------------------------------------------------------------------------
# features


def extract_features(img, pair, bias="mean", **extra):
    """SNR features for a region pair.

    ``extra`` keyword arguments are passed through to :class:`Indication`.

    Raises
    ------
    DegenerateRegionError
        Inner region, its complement or the annulus is empty.
    UndefinedSNRError
        The annulus is constant after correction.
    """
    img = check_image(img)
    inner = pair.inner.mask(img.shape)
    annulus = pair.outer.mask(img.shape) & ~inner
    n_in = int(inner.sum())
    if n_in == 0 or n_in == img.size:
        raise DegenerateRegionError(f"inner region covers {n_in} of {img.size} pixels")
    if not annulus.any():
        raise DegenerateRegionError("annulus between inner and outer regions is empty")
    mu = _bias_outside(img, inner, bias)
    ring = img[annulus] - mu
    peak = float((img[inner] - mu).max())
    e_max = float(ring.max())
    e_mean = float(ring.mean())
    if not e_max > e_mean:
        raise UndefinedSNRError("noise peak equals noise average")
    snr = (peak - e_mean) / (e_max - e_mean)
    extra.setdefault("center", pair.inner.center)
    return Indication(
        pair=pair, signal_peak=peak, noise_peak=e_max, noise_mean=e_mean, snr=snr, bias=mu, **extra
    )


# ---------------------------------------------------------------------------
# multiple indications


def find_candidates(img):
    """Interior 3x3 local maxima as ``(u, v)`` tuples in lexicographic order.

    A pixel qualifies if it is not smaller than any of its 8 neighbors. On a
    plateau of such pixels only the lexicographically smallest is kept.
    """
    img = check_image(img)
    n_rows, n_cols = img.shape
    if n_rows < 3 or n_cols < 3:
        return []
    local_max = img >= ndimage.maximum_filter(img, size=3, mode="nearest")
    local_max[0, :] = local_max[-1, :] = False
    local_max[:, 0] = local_max[:, -1] = False
    labels, n = ndimage.label(local_max, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    v, u = np.nonzero(labels)
    lab = labels[v, u]
    keys = np.lexsort((v, u, lab))  # by label, then u, then v
    first = np.ones(keys.size, dtype=bool)
    first[1:] = lab[keys][1:] != lab[keys][:-1]
    chosen = keys[first]
    return sorted((int(u[i]), int(v[i])) for i in chosen)


def _indication_at(img, center, cfg, shape, scaled_amplitude, ident, a_bounds=None):
    region, vol = optimize_region(img, center, cfg, shape, a_bounds=a_bounds)
    pair = make_outer(region)
    return extract_features(
        img,
        pair,
        bias=cfg.bias,
        volume=vol,
        scaled_amplitude=scaled_amplitude,
        center=(float(center[0]), float(center[1])),
        clipped_fraction=pair.outer.clipped_fraction(img.shape),
        id=ident,
    )


_SKIP = (ExtractionError, DegenerateRegionError, UndefinedSNRError)


def detect_indications(img, cfg=None, rho=0.9, shape="ellipse"):
    """Locate hotspots and extract an optimal region pair for each.

    Amplitudes are measured above the image's overall mean. Candidates whose
    amplitude relative to the strongest candidate is below ``rho`` are
    dropped. Candidates whose extraction degenerates are skipped.

    Returns
    -------
    list of Indication
        Sorted by scaled amplitude, largest first.
    """
    cfg = cfg or VolumeConfig()
    img = check_image(img)
    cands = find_candidates(img)
    if not cands:
        return []
    base = estimate_bias(img)
    amps = np.array([img[v, u] - base for u, v in cands])
    top = amps.max()
    if not top > 0:
        return []
    scaled = amps / top
    keep = [i for i in np.argsort(-scaled, kind="stable") if scaled[i] >= rho]
    out = []
    for i in keep:
        try:
            out.append(_indication_at(img, cands[i], cfg, shape, float(scaled[i]), len(out)))
        except _SKIP as exc:
            log.debug("skipping candidate %s: %s", cands[i], exc)
    return out


def merge_pairs(img, indications, closeness=10.0, snr_threshold=2.5, cfg=None, shape="ellipse"):
    """Merge close, individually weak indications into one.

    For each pair within ``closeness`` pixels whose SNRs are both below
    ``snr_threshold``, a region is re-optimized at the midpoint of the two
    centers with the upper size bound widened to reach both. The merged
    indication replaces the pair when its SNR beats both.
    """
    cfg = cfg or VolumeConfig()
    img = check_image(img)
    items = list(indications)
    if len(items) < 2:
        return items
    lo, hi = cfg.bounds(img.shape)
    limit = float(max(img.shape))
    next_id = max(ind.id for ind in items) + 1
    used = set()
    replaced = {}
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if i in used or j in used:
                continue
            p, q = items[i], items[j]
            if not (p.snr < snr_threshold and q.snr < snr_threshold):
                continue
            dist = math.dist(p.center, q.center)
            if dist > closeness:
                continue
            mid = ((p.center[0] + q.center[0]) / 2.0, (p.center[1] + q.center[1]) / 2.0)
            reach = dist / 2.0 + max(p.region.a, q.region.a)
            bounds = (lo, min(max(hi, reach), limit))
            try:
                merged = _indication_at(
                    img, mid, cfg, shape, max(p.scaled_amplitude, q.scaled_amplitude),
                    next_id, a_bounds=bounds,
                )
            except _SKIP as exc:
                log.debug("merge at %s failed: %s", mid, exc)
                continue
            if merged.snr > p.snr and merged.snr > q.snr:
                merged = replace(merged, merged_from=(p.id, q.id))
                next_id += 1
                used.update((i, j))
                replaced[i] = merged
    out = []
    for k, ind in enumerate(items):
        if k in replaced:
            out.append(replaced[k])
        elif k not in used:
            out.append(ind)
    return out


def best_indication(indications):
    """Highest-SNR indication, or ``None`` for an empty list."""
    if not indications:
        return None
    return max(indications, key=lambda ind: ind.snr)


def scan_image(img, cfg=None, rho=0.9, merge_distance=10.0, merge_snr=2.5, shape="ellipse"):
    """Detect, merge and return ``(best, all_indications)`` for an already filtered image."""
    found = detect_indications(img, cfg, rho, shape)
    found = merge_pairs(img, found, merge_distance, merge_snr, cfg, shape)
    return best_indication(found), found
