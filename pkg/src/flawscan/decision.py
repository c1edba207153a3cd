"""Threshold calibration and the D-metric detection rule."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import CalibrationError, FlawScanError, ParameterError

__all__ = [
    "QUANTILE_METHOD",
    "D_FLOOR",
    "DetectionPolicy",
    "Decision",
    "empirical_threshold",
    "calibrate_alpha",
    "noise_threshold",
    "d_metric",
    "decide",
    "classify_dataset",
]

log = logging.getLogger(__name__)

#: numpy quantile method used for every calibration (linear interpolation
#: of order statistics, p = (k - 1) / (n - 1)).
QUANTILE_METHOD = "linear"

#: Value reported for D when the log-domain metric is unavailable and the
#: SNR is not positive.
D_FLOOR = -12.0


@dataclass(frozen=True)
class DetectionPolicy:
    alpha: float
    target_pfa: Optional[float] = None
    source: str = "fixed"

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ParameterError(f"alpha must be at least 1, got {self.alpha}")
        if self.target_pfa is not None and not 0 < self.target_pfa < 1:
            raise ParameterError("target_pfa must lie in (0, 1)")
        if self.source not in ("calibrated", "fixed"):
            raise ParameterError(f"unknown policy source {self.source!r}")

    @classmethod
    def calibrated(cls, noise_snrs, target_pfa):
        return cls(calibrate_alpha(noise_snrs, target_pfa), target_pfa, "calibrated")


@dataclass(frozen=True)
class Decision:
    d_metric: float
    detected: bool
    e_th: float
    linear_fallback: bool = False


def empirical_threshold(values, target_pfa):
    """The ``1 - target_pfa`` empirical quantile of ``values``."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise CalibrationError("cannot calibrate on an empty set")
    if not 0 < target_pfa < 1:
        raise CalibrationError(f"target PFA must lie in (0, 1), got {target_pfa}")
    if not np.all(np.isfinite(values)):
        raise CalibrationError("calibration values must be finite")
    return float(np.quantile(values, 1.0 - target_pfa, method=QUANTILE_METHOD))


def calibrate_alpha(noise_snrs, target_pfa):
    """SNR criterion giving a false-call rate of ``target_pfa`` on noise images."""
    return empirical_threshold(noise_snrs, target_pfa)


def noise_threshold(noise_peak, noise_mean, alpha):
    """Dynamic noise threshold ``alpha * noise_peak + (1 - alpha) * noise_mean``."""
    return alpha * noise_peak + (1.0 - alpha) * noise_mean


def d_metric(signal_peak, noise_peak, noise_mean, alpha):
    """Detection metric and whether the linear fallback was needed.

    ``D = log10(signal_peak) - log10(e_th)``. When either operand is not
    positive, ``log10(snr / alpha)`` is reported instead (floored at
    ``D_FLOOR``); it has the same sign as ``signal_peak - e_th``.
    """
    e_th = noise_threshold(noise_peak, noise_mean, alpha)
    if signal_peak > 0 and e_th > 0:
        return math.log10(signal_peak) - math.log10(e_th), e_th, False
    snr = (signal_peak - noise_mean) / (noise_peak - noise_mean)
    ratio = snr / alpha
    d = math.log10(ratio) if ratio > 0 else D_FLOOR
    return max(d, D_FLOOR), e_th, True


def decide(ind, alpha):
    """Apply the rule ``D > 0`` to an indication."""
    d, e_th, fallback = d_metric(ind.signal_peak, ind.noise_peak, ind.noise_mean, alpha)
    if fallback:
        detected = ind.signal_peak > e_th
    else:
        detected = d > 0
    return Decision(d_metric=d, detected=bool(detected), e_th=e_th, linear_fallback=fallback)


def classify_dataset(records, threshold, scan_cfg, loader=None):
    """Score and classify every specimen in a manifest.

    Parameters
    ----------
    records : list of SpecimenRecord
    threshold : float or DetectionPolicy
        ``alpha`` for the SNR methods, ``z_th`` for ``peakamp``.
    scan_cfg : flawscan.pipeline.ScanConfig
    loader : callable, optional
        Maps an image path to an array; defaults to :func:`load_image`.

    Returns
    -------
    rows : list of dict
        One per specimen, in manifest order, with keys ``specimen``,
        ``flaw_size``, ``D``, ``snr``, ``detected`` and ``status``.
    audit : list of dict
        One per indication (SNR methods only).
    """
    from .imagery import load_image
    from .pipeline import score_image

    loader = loader or load_image
    if isinstance(threshold, DetectionPolicy):
        threshold = threshold.alpha
    rows, audit = [], []
    for rec in records:
        row = {"specimen": rec.image, "flaw_size": rec.flaw_size, "D": None, "snr": None,
               "detected": None, "status": "ok"}
        try:
            score = score_image(loader(rec.image), scan_cfg)
            d, detected, fallback = score.decide(threshold)
            row.update(D=d, snr=score.snr, detected=detected)
            if fallback:
                row["status"] = "fallback"
            for ind in score.indications:
                entry = ind.to_dict()
                entry["specimen"] = rec.image
                entry["D"] = d_metric(ind.signal_peak, ind.noise_peak, ind.noise_mean, threshold)[0]
                audit.append(entry)
        except (FlawScanError, OSError) as exc:
            log.warning("%s: %s", rec.image, exc)
            row["status"] = f"error: {exc}"
        rows.append(row)
    return rows, audit
