"""Per-image scoring shared by the CLI, the estimators and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from .baselines import MethodId, peak_amplitude
from .decision import D_FLOOR, d_metric
from .exceptions import ExtractionError, ParameterError
from .extraction import Indication, VolumeConfig, scan_image
from .filtering import DEFAULT_FWHM, make_kernel, matched_filter
from .imagery import check_image

__all__ = ["ScanConfig", "ImageScore", "score_image", "score_filtered"]


@dataclass(frozen=True)
class ScanConfig:
    method: str = "ellipse"
    fwhm: float = DEFAULT_FWHM
    volume: VolumeConfig = field(default_factory=VolumeConfig)
    rho: float = 0.9
    merge: bool = True
    merge_distance: float = 10.0
    merge_snr: float = 2.5
    axis_aligned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", MethodId(self.method).value)
        if not 0 < self.rho < 1:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")

    @property
    def shape(self):
        return self.method

    def volume_config(self):
        if self.method == "rectangle" and self.axis_aligned:
            return replace(self.volume, fixed_theta=0.0)
        return self.volume


@dataclass(frozen=True)
class ImageScore:
    """Response of one image under one method.

    For the SNR methods ``best`` is the highest-SNR indication (``None`` if
    the image produced none). For ``peakamp`` only ``peak`` is set.
    """

    method: str
    best: Optional[Indication] = None
    indications: Tuple[Indication, ...] = ()
    peak: float = float("nan")

    @property
    def snr(self):
        return self.best.snr if self.best is not None else None

    def response(self, threshold):
        """``D`` for the SNR methods, ``log10(peak) - log10(z_th)`` for peakamp."""
        return self.decide(threshold)[0]

    def decide(self, threshold):
        """``(D, detected, used_linear_fallback)``."""
        if self.method == "peakamp":
            if not threshold > 0:
                raise ParameterError(f"z_th must be positive, got {threshold}")
            if self.peak > 0:
                d = math.log10(self.peak) - math.log10(threshold)
            else:
                d = D_FLOOR
            return d, bool(self.peak > threshold), not self.peak > 0
        if self.best is None:
            raise ExtractionError("image produced no indication")
        ind = self.best
        d, e_th, fallback = d_metric(ind.signal_peak, ind.noise_peak, ind.noise_mean, threshold)
        detected = ind.signal_peak > e_th if fallback else d > 0
        return d, bool(detected), fallback


def score_filtered(filtered, cfg):
    """Score an already matched-filtered image with an SNR method."""
    best, found = scan_image(
        filtered,
        cfg.volume_config(),
        rho=cfg.rho,
        merge_distance=cfg.merge_distance if cfg.merge else -1.0,
        merge_snr=cfg.merge_snr,
        shape=cfg.shape,
    )
    return ImageScore(cfg.method, best=best, indications=tuple(found))


def score_image(raw, cfg, kernel=None):
    """Score a raw image: matched filter then extraction, or the raw peak."""
    raw = check_image(raw)
    if cfg.method == "peakamp":
        return ImageScore("peakamp", peak=peak_amplitude(raw))
    kernel = kernel or make_kernel(cfg.fwhm)
    return score_filtered(matched_filter(raw, kernel), cfg)
