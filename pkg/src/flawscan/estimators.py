"""scikit-learn style estimators wrapping the detection pipeline.

Image inputs ``X`` are a single 2-D image or a stack of shape
``(n_images, n_rows, n_cols)``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import calibrate_zth, peak_amplitude
from .decision import D_FLOOR, calibrate_alpha
from .exceptions import CalibrationError, FitError, ParameterError
from .extraction import VolumeConfig
from .filtering import DEFAULT_FWHM, make_kernel, matched_filter
from .imagery import check_image_stack
from .nim import NimParams, PeakAmpParams, a90, fit_nim, fit_peakamp, pod, pod_peakamp
from .pipeline import ScanConfig, score_filtered

__all__ = [
    "MatchedFilter",
    "SNRFlawDetector",
    "PeakAmplitudeDetector",
    "NoiseInterferenceModel",
]


class MatchedFilter(TransformerMixin, BaseEstimator):
    """Gaussian matched filter as a stateless transformer."""

    def __init__(self, fwhm=DEFAULT_FWHM, mode="reflect"):
        self.fwhm = fwhm
        self.mode = mode

    def fit(self, X=None, y=None):
        self.kernel_ = make_kernel(self.fwhm)
        return self

    def transform(self, X):
        kernel = getattr(self, "kernel_", None) or make_kernel(self.fwhm)
        X = check_image_stack(X)
        return np.stack([matched_filter(img, kernel, self.mode) for img in X]) if len(X) else X


class SNRFlawDetector(BaseEstimator):
    """Ellipse (or rectangle) SNR detector with a PFA-calibrated criterion.

    ``fit`` takes flawless images and sets ``alpha_`` to the ``1 - target_pfa``
    quantile of their SNRs, unless a fixed ``alpha`` is given.

    Parameters
    ----------
    method : {"ellipse", "rectangle"}
    fwhm : float
        Matched-filter FWHM in pixels.
    lam : float
        Penalty weight on non-positive corrected intensities.
    rho : float
        Minimum candidate amplitude relative to the strongest.
    merge_distance, merge_snr : float
        Paired-hotspot merging settings; ``merge_distance < 0`` disables it.
    axis_aligned : bool
        Fix rectangle orientation to the image axes.
    target_pfa : float
    alpha : float, optional
        Fixed SNR criterion; skips calibration.
    """

    def __init__(self, method="ellipse", fwhm=DEFAULT_FWHM, lam=100.0, rho=0.9,
                 merge_distance=10.0, merge_snr=2.5, axis_aligned=False, target_pfa=0.03,
                 alpha=None):
        self.method = method
        self.fwhm = fwhm
        self.lam = lam
        self.rho = rho
        self.merge_distance = merge_distance
        self.merge_snr = merge_snr
        self.axis_aligned = axis_aligned
        self.target_pfa = target_pfa
        self.alpha = alpha

    def _scan_config(self):
        if self.method not in ("ellipse", "rectangle"):
            raise ParameterError(f"SNRFlawDetector method must be ellipse or rectangle, got {self.method!r}")
        return ScanConfig(
            method=self.method, fwhm=self.fwhm, volume=VolumeConfig(lam=self.lam), rho=self.rho,
            merge=self.merge_distance >= 0, merge_distance=self.merge_distance,
            merge_snr=self.merge_snr, axis_aligned=self.axis_aligned,
        )

    def _scores(self, X):
        cfg = self._scan_config()
        kernel = make_kernel(self.fwhm)
        return [score_filtered(matched_filter(img, kernel), cfg) for img in check_image_stack(X)]

    def fit(self, X, y=None):
        """Calibrate ``alpha_`` on flawless images ``X``."""
        scores = self._scores(X)
        self.noise_snrs_ = np.array([s.snr for s in scores if s.best is not None])
        self.n_without_indication_ = len(scores) - self.noise_snrs_.size
        if self.alpha is not None:
            self.alpha_ = float(self.alpha)
        else:
            if self.noise_snrs_.size == 0:
                raise CalibrationError("no calibration image produced an indication")
            self.alpha_ = calibrate_alpha(self.noise_snrs_, self.target_pfa)
        return self

    def transform(self, X):
        """Features ``[signal_peak, noise_peak, noise_mean, snr]`` of each image's best
        indication; NaN rows for images without one."""
        out = []
        for s in self._scores(X):
            b = s.best
            out.append([np.nan] * 4 if b is None else [b.signal_peak, b.noise_peak, b.noise_mean, b.snr])
        return np.array(out, dtype=np.float64).reshape(-1, 4)

    def decision_function(self, X):
        """``D`` per image; ``D_FLOOR`` for images without an indication."""
        check_is_fitted(self, "alpha_")
        return np.array(
            [D_FLOOR if s.best is None else s.response(self.alpha_) for s in self._scores(X)]
        )

    def predict(self, X):
        check_is_fitted(self, "alpha_")
        return np.array(
            [False if s.best is None else s.decide(self.alpha_)[1] for s in self._scores(X)]
        )


class PeakAmplitudeDetector(BaseEstimator):
    """Raw peak-amplitude detector with a PFA-calibrated threshold ``z_th_``."""

    def __init__(self, target_pfa=0.03, z_th=None):
        self.target_pfa = target_pfa
        self.z_th = z_th

    def fit(self, X, y=None):
        self.noise_peaks_ = self.transform(X)
        self.z_th_ = float(self.z_th) if self.z_th is not None else calibrate_zth(
            self.noise_peaks_, self.target_pfa
        )
        if not self.z_th_ > 0:
            raise CalibrationError(f"z_th must be positive, got {self.z_th_}")
        return self

    def transform(self, X):
        return np.array([peak_amplitude(img) for img in check_image_stack(X)])

    def decision_function(self, X):
        check_is_fitted(self, "z_th_")
        peaks = self.transform(X)
        lz = math.log10(self.z_th_)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(peaks > 0, np.log10(np.where(peaks > 0, peaks, 1.0)) - lz, D_FLOOR)
        return d

    def predict(self, X):
        check_is_fitted(self, "z_th_")
        return self.transform(X) > self.z_th_


class NoiseInterferenceModel(BaseEstimator):
    """Maximum-likelihood NIM with POD and a90.

    ``fit(sizes, responses)``: ``sizes`` holds the flaw size of each specimen
    (NaN for flawless ones) and ``responses`` its ``D``. When ``z_th`` is
    set, responses are raw peak amplitudes and the PeakAmp model is fitted on
    their ``log10``.
    """

    def __init__(self, z_th=None, a90_bracket=(1.0, 1e4)):
        self.z_th = z_th
        self.a90_bracket = a90_bracket

    def fit(self, sizes, responses):
        sizes = np.asarray(sizes, dtype=np.float64).ravel()
        responses = np.asarray(responses, dtype=np.float64).ravel()
        if sizes.shape != responses.shape:
            raise FitError("sizes and responses must have equal lengths")
        flawed = ~np.isnan(sizes)
        if self.z_th is None:
            data = np.column_stack([responses[flawed], sizes[flawed]])
            self.params_ = fit_nim(data, responses[~flawed])
        else:
            self.params_ = fit_peakamp(responses[flawed], sizes[flawed], responses[~flawed], self.z_th)
        return self

    def _pod_fn(self):
        check_is_fitted(self, "params_")
        if isinstance(self.params_, PeakAmpParams):
            return lambda s: pod_peakamp(self.params_, s)
        return lambda s: pod(self.params_, s)

    def predict_proba(self, sizes):
        """POD at each flaw size."""
        return np.asarray(self._pod_fn()(np.asarray(sizes, dtype=np.float64)), dtype=np.float64)

    def a90(self, level=0.9):
        return a90(self._pod_fn(), self.a90_bracket, level=level)

    @classmethod
    def from_params(cls, params, **kwargs):
        """Wrap already fitted parameters (``NimParams`` or ``PeakAmpParams``)."""
        if not isinstance(params, (NimParams, PeakAmpParams)):
            raise ParameterError("params must be NimParams or PeakAmpParams")
        est = cls(z_th=getattr(params, "z_th", None), **kwargs)
        est.params_ = params
        return est
