"""Seeded simulation of flawed/flawless images and the three-method POD comparison.

All randomness flows from ``SimConfig.seed``. Each image draws from its own
stream, ``SeedSequence(seed, spawn_key=key)``, keyed by

* ``(replicate, 0, i)`` for the ``i``-th noise image of a replicate and
* ``(replicate, 1, size_index, j)`` for the ``j``-th flawed image of a size,

so results do not depend on evaluation order.
"""

from __future__ import annotations

import functools
import glob
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import ndtr

from ._version import __version__
from .baselines import calibrate_zth
from .decision import QUANTILE_METHOD, calibrate_alpha
from .exceptions import ConfigError, FlawScanError, ParameterError, PlacementError
from .extraction import VolumeConfig
from .filtering import FWHM_PER_SIGMA, DEFAULT_FWHM, make_kernel, matched_filter
from .imagery import check_image, load_image
from .nim import a90, fit_nim, fit_peakamp, pod, pod_peakamp
from .pipeline import ScanConfig, score_filtered

__all__ = [
    "SimConfig",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "image_rng",
    "signal_peak",
    "inject_signal",
    "make_noise",
    "score_images",
    "run_comparison",
    "write_report",
]

log = logging.getLogger(__name__)

METHODS = ("ellipse", "rectangle", "peakamp")
PAIRS = (("ellipse", "rectangle"), ("rectangle", "peakamp"), ("ellipse", "peakamp"))


def _default_sizes():
    return tuple(float(s) for s in np.geomspace(15.0, 120.0, 12))


def _default_curve_sizes():
    return tuple(float(s) for s in np.geomspace(5.0, 200.0, 61))


@dataclass(frozen=True)
class SimConfig:
    seed: int = 20240101
    sizes: Tuple[float, ...] = field(default_factory=_default_sizes)
    replicates: int = 20
    images_per_size: int = 1
    gamma0: float = -7.0
    gamma1: float = 1.22
    k: float = 0.0785
    noise_source: str = "synthetic"
    noise_sigma: float = 1e-6
    noise_ar: float = 0.0
    pool_dir: Optional[str] = None
    n_noise_images: int = 100
    target_pfa: float = 0.03
    image_shape: Tuple[int, int] = (30, 30)
    central_fraction: float = 0.5
    fwhm: float = DEFAULT_FWHM
    lam: float = 100.0
    rho: float = 0.9
    merge_distance: float = 10.0
    merge_snr: float = 2.5
    axis_aligned_rectangle: bool = False
    a90_bracket: Tuple[float, float] = (1.0, 1e4)
    curve_sizes: Tuple[float, ...] = field(default_factory=_default_curve_sizes)

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(float(s) for s in self.sizes))
        object.__setattr__(self, "curve_sizes", tuple(float(s) for s in self.curve_sizes))
        object.__setattr__(self, "image_shape", tuple(int(n) for n in self.image_shape))
        object.__setattr__(self, "a90_bracket", tuple(float(x) for x in self.a90_bracket))
        if not self.sizes or any(s <= 0 for s in self.sizes):
            raise ConfigError("flaw sizes must be positive")
        if self.replicates < 1 or self.images_per_size < 1 or self.n_noise_images < 2:
            raise ConfigError("replicates and images_per_size must be >= 1, n_noise_images >= 2")
        if self.noise_source not in ("synthetic", "resample"):
            raise ConfigError(f"unknown noise source {self.noise_source!r}")
        if self.noise_source == "resample" and not self.pool_dir:
            raise ConfigError("resample mode needs pool_dir")
        if not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be positive")
        if not -1 < self.noise_ar < 1:
            raise ConfigError("noise_ar must lie in (-1, 1)")
        if not 0 < self.target_pfa < 1:
            raise ConfigError("target_pfa must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        for key in ("sizes", "curve_sizes", "image_shape", "a90_bracket"):
            out[key] = list(out[key])
        return out

    def scan_config(self, method):
        vol = VolumeConfig(lam=self.lam)
        return ScanConfig(
            method=method,
            fwhm=self.fwhm,
            volume=vol,
            rho=self.rho,
            merge_distance=self.merge_distance,
            merge_snr=self.merge_snr,
            axis_aligned=self.axis_aligned_rectangle,
        )


def image_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


# ---------------------------------------------------------------------------
# image generation


def signal_peak(size, gamma0, gamma1):
    """Peak amplitude of a flaw signature, ``10**(gamma0 + gamma1 * log10(size))``."""
    return 10.0 ** (gamma0 + gamma1 * math.log10(size))


def inject_signal(noise_img, size, gamma0=-7.0, gamma1=1.22, k=0.0785, location=None, rng=None,
                  central_fraction=0.5):
    """Add a Gaussian flaw signature to an image.

    The peak follows the power law of :func:`signal_peak` and the FWHM is
    ``k * size`` pixels. Without an explicit ``(u, v)`` location, a pixel is
    drawn uniformly from the central ``central_fraction`` of each axis,
    restricted to positions where the 3-sigma footprint fits.

    Raises
    ------
    PlacementError
        If the footprint cannot fit at the requested (or any central) location.
    """
    img = check_image(noise_img, "noise_img")
    if not size > 0:
        raise ParameterError(f"flaw size must be positive, got {size}")
    n_rows, n_cols = img.shape
    sigma = k * size / FWHM_PER_SIGMA
    reach = 3.0 * sigma
    if location is None:
        if rng is None:
            raise ParameterError("rng is required when location is not given")
        margin = (1.0 - central_fraction) / 2.0
        u_lo = math.ceil(max(reach, margin * (n_cols - 1)))
        u_hi = math.floor(min(n_cols - 1 - reach, (1.0 - margin) * (n_cols - 1)))
        v_lo = math.ceil(max(reach, margin * (n_rows - 1)))
        v_hi = math.floor(min(n_rows - 1 - reach, (1.0 - margin) * (n_rows - 1)))
        if u_lo > u_hi or v_lo > v_hi:
            raise PlacementError(f"signal of size {size} (3-sigma {reach:.2f} px) does not fit")
        location = (int(rng.integers(u_lo, u_hi + 1)), int(rng.integers(v_lo, v_hi + 1)))
    cu, cv = location
    if cu - reach < 0 or cv - reach < 0 or cu + reach > n_cols - 1 or cv + reach > n_rows - 1:
        raise PlacementError(f"signal footprint at {location} leaves the image")
    vv, uu = np.mgrid[0:n_rows, 0:n_cols]
    bump = np.exp(-((uu - cu) ** 2 + (vv - cv) ** 2) / (2.0 * sigma * sigma))
    return img + signal_peak(size, gamma0, gamma1) * bump


@functools.lru_cache(maxsize=4)
def _load_pool(pool_dir):
    paths = sorted(
        p for ext in ("*.txt", "*.csv", "*.pgm") for p in glob.glob(os.path.join(pool_dir, ext))
    )
    return tuple(load_image(p) for p in paths)


def make_noise(cfg, rng):
    """One flawless image: a pool draw (resample) or a Gaussian field (synthetic)."""
    if cfg.noise_source == "resample":
        pool = _load_pool(os.path.abspath(cfg.pool_dir))
        if not pool:
            raise ConfigError(f"noise pool {cfg.pool_dir!r} is empty")
        return pool[int(rng.integers(len(pool)))].copy()
    n_rows, n_cols = cfg.image_shape
    z = rng.standard_normal((n_rows, n_cols))
    phi = cfg.noise_ar
    if phi:
        # stationary AR(1) along each row with marginal variance noise_sigma^2
        out = np.empty_like(z)
        out[:, 0] = z[:, 0]
        scale = math.sqrt(1.0 - phi * phi)
        for j in range(1, n_cols):
            out[:, j] = phi * out[:, j - 1] + scale * z[:, j]
        z = out
    return cfg.noise_sigma * z


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test


class WilcoxonResult(NamedTuple):
    statistic: float
    p_value: float
    n: int
    method: str


def _midranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(x, y, method="auto"):
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped and tied absolute differences get mid-ranks.
    The statistic is the rank sum of positive ``x - y`` differences. With
    ``method="auto"`` the null distribution is exact (all ``2**n`` sign
    assignments, counted by dynamic programming) for ``n <= 20`` and a
    tie-corrected normal approximation with continuity correction above.

    Returns
    -------
    WilcoxonResult
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError("x and y must have equal lengths")
    if x.size < 5:
        raise ParameterError(f"need at least 5 pairs, got {x.size}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ParameterError("all paired differences are zero")
    ranks = _midranks(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= 20 else "approx"
    if method == "exact":
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        total = int(doubled.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in doubled:
            counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
        counts /= counts.sum()
        t2 = int(round(2.0 * t_plus))
        lower = counts[: t2 + 1].sum()
        upper = counts[t2:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - ((tie_counts**3 - tie_counts).sum()) / 48.0
        dev = t_plus - mean
        dev = math.copysign(max(abs(dev) - 0.5, 0.0), dev)
        z = dev / math.sqrt(var)
        p = min(1.0, 2.0 * float(ndtr(-abs(z))))
    else:
        raise ParameterError(f"unknown method {method!r}")
    return WilcoxonResult(t_plus, float(p), n, method)


# ---------------------------------------------------------------------------
# comparison experiment


def score_images(raw_images, cfg, methods=METHODS):
    """Score raw images under each method; filtering is shared by the SNR methods.

    Returns ``{method: [ImageScore, ...]}``.
    """
    from .pipeline import ImageScore

    kernel = make_kernel(cfg.fwhm)
    scans = {m: cfg.scan_config(m) for m in methods if m != "peakamp"}
    out = {m: [] for m in methods}
    for raw in raw_images:
        if "peakamp" in out:
            out["peakamp"].append(ImageScore("peakamp", peak=float(np.max(raw))))
        if scans:
            filtered = matched_filter(raw, kernel)
            for m, sc in scans.items():
                out[m].append(score_filtered(filtered, sc))
    return out


def _noise_images(cfg, replicate):
    return [make_noise(cfg, image_rng(cfg.seed, replicate, 0, i)) for i in range(cfg.n_noise_images)]


def _flawed_images(cfg, replicate):
    images, sizes = [], []
    for si, size in enumerate(cfg.sizes):
        for j in range(cfg.images_per_size):
            rng = image_rng(cfg.seed, replicate, 1, si, j)
            noise = make_noise(cfg, rng)
            images.append(
                inject_signal(noise, size, cfg.gamma0, cfg.gamma1, cfg.k, rng=rng,
                              central_fraction=cfg.central_fraction)
            )
            sizes.append(size)
    return images, np.array(sizes)


def _run_replicate(cfg, replicate, methods):
    noise_scores = score_images(_noise_images(cfg, replicate), cfg, methods)
    flaw_imgs, sizes = _flawed_images(cfg, replicate)
    flaw_scores = score_images(flaw_imgs, cfg, methods)
    curve = np.array(cfg.curve_sizes)
    result = {"replicate": replicate}
    for m in methods:
        cell = {"threshold": None, "params": None, "a90": None, "pod": None, "error": None}
        result[m] = cell
        try:
            if m == "peakamp":
                noise_peaks = np.array([s.peak for s in noise_scores[m]])
                z_th = calibrate_zth(noise_peaks, cfg.target_pfa)
                cell["threshold"] = z_th
                cell["observed_pfa"] = float(np.mean(noise_peaks > z_th))
                flaw_peaks = np.array([s.peak for s in flaw_scores[m]])
                params = fit_peakamp(flaw_peaks, sizes, noise_peaks, z_th)
                pod_fn = functools.partial(pod_peakamp, params)
            else:
                usable = [s for s in noise_scores[m] if s.best is not None]
                cell["noise_without_indication"] = len(noise_scores[m]) - len(usable)
                alpha = calibrate_alpha([s.snr for s in usable], cfg.target_pfa)
                cell["threshold"] = alpha
                noise_d = np.array([s.response(alpha) for s in usable])
                cell["observed_pfa"] = float(np.mean(noise_d > 0))
                keep = [i for i, s in enumerate(flaw_scores[m]) if s.best is not None]
                flaw_d = np.array([flaw_scores[m][i].response(alpha) for i in keep])
                params = fit_nim(np.column_stack([flaw_d, sizes[keep]]), noise_d)
                pod_fn = functools.partial(pod, params)
            cell["params"] = params.to_dict()
            cell["pod"] = [float(p) for p in pod_fn(curve)]
            cell["a90"] = a90(pod_fn, cfg.a90_bracket)
        except FlawScanError as exc:
            log.warning("replicate %d, %s: %s", replicate, m, exc)
            cell["error"] = str(exc)
    return result


def run_comparison(cfg, methods=METHODS, progress=None):
    """Run the replicate experiments and compare methods.

    Each replicate draws its own noise set, calibrates every method to
    ``target_pfa`` on it, scores ``images_per_size`` flawed images per size,
    fits the NIM per method and computes the POD curve and a90. Paired
    Wilcoxon tests compare the a90 values across replicates.

    Returns
    -------
    dict
        JSON-ready report.
    """
    reps = []
    for r in range(cfg.replicates):
        reps.append(_run_replicate(cfg, r, methods))
        if progress is not None:
            progress(r + 1, cfg.replicates)
    summary = {}
    for m in methods:
        vals = [rep[m]["a90"] for rep in reps if rep[m]["a90"] is not None]
        summary[m] = {
            "a90": [rep[m]["a90"] for rep in reps],
            "median_a90": float(np.median(vals)) if vals else None,
            "n_failed": sum(rep[m]["a90"] is None for rep in reps),
        }
    tests = []
    for x_m, y_m in PAIRS:
        if x_m not in methods or y_m not in methods:
            continue
        paired = [
            (rep[x_m]["a90"], rep[y_m]["a90"])
            for rep in reps
            if rep[x_m]["a90"] is not None and rep[y_m]["a90"] is not None
        ]
        entry = {"x": x_m, "y": y_m, "n_pairs": len(paired)}
        try:
            xs, ys = np.array(paired).T
            res = wilcoxon_signed_rank(xs, ys)
            entry.update(
                statistic=res.statistic, p_value=res.p_value, n_nonzero=res.n,
                distribution=res.method, median_difference=float(np.median(xs - ys)),
            )
        except (ValueError, FlawScanError) as exc:
            entry["error"] = str(exc)
        tests.append(entry)
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "metadata": {
            "quantile_method": QUANTILE_METHOD,
            "calibration": "once per replicate experiment, on that replicate's own noise set",
            "image_response": "highest-SNR indication after pair merging",
            "noise_without_indication": "dropped from calibration and NIM fit (count reported)",
            "wilcoxon": "zero differences dropped; mid-ranks for ties; exact for n <= 20",
            "rng": "SeedSequence(seed, spawn_key=(replicate, 0, i) noise | (replicate, 1, size_idx, j) flawed)",
        },
        "curve_sizes": list(cfg.curve_sizes),
        "replicates": reps,
        "summary": summary,
        "wilcoxon": tests,
    }


def report_json(report):
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False)


def write_report(report, path, curves_dir=None):
    """Write the report JSON and, optionally, one POD-curve CSV per method."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
        fh.write("\n")
    if curves_dir is None:
        return
    os.makedirs(curves_dir, exist_ok=True)
    sizes = report["curve_sizes"]
    for m in report["summary"]:
        with open(os.path.join(curves_dir, f"pod_{m}.csv"), "w", encoding="utf-8") as fh:
            fh.write("replicate,size,pod\n")
            for rep in report["replicates"]:
                if rep[m]["pod"] is None:
                    continue
                for s, p in zip(sizes, rep[m]["pod"]):
                    fh.write(f"{rep['replicate']},{s!r},{p!r}\n")
