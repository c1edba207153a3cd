"""Comparison methods: the optimized rectangle and raw peak amplitude."""

from __future__ import annotations

from dataclasses import replace
from enum import Enum


from .decision import empirical_threshold
from .extraction import VolumeConfig, optimize_region
from .imagery import check_image

__all__ = ["MethodId", "optimize_rectangle", "peak_amplitude", "calibrate_zth"]


class MethodId(str, Enum):
    ELLIPSE = "ellipse"
    RECTANGLE = "rectangle"
    PEAKAMP = "peakamp"

    def __str__(self):
        return self.value


def optimize_rectangle(img, center, cfg=None, axis_aligned=False):
    """Rectangle counterpart of :func:`flawscan.extraction.optimize_ellipse`."""
    cfg = cfg or VolumeConfig()
    if axis_aligned:
        cfg = replace(cfg, fixed_theta=0.0)
    return optimize_region(img, center, cfg, shape="rectangle")


def peak_amplitude(raw_img):
    """Largest pixel of the unfiltered image."""
    return float(check_image(raw_img).max())


def calibrate_zth(noise_peaks, target_pfa):
    """Peak-amplitude threshold with false-call rate ``target_pfa`` on noise images."""
    return empirical_threshold(noise_peaks, target_pfa)
