"""flawscan: automated flaw detection and probability-of-detection analysis for NDE images.

The pipeline is: matched filter -> optimal elliptical region extraction ->
SNR-based detection -> noise-interference model -> POD curve and a90.
"""

from ._version import __version__
from .baselines import MethodId, calibrate_zth, optimize_rectangle, peak_amplitude
from .decision import (
    Decision,
    DetectionPolicy,
    calibrate_alpha,
    classify_dataset,
    d_metric,
    decide,
)
from .estimators import (
    MatchedFilter,
    NoiseInterferenceModel,
    PeakAmplitudeDetector,
    SNRFlawDetector,
)
from .exceptions import FlawScanError
from .extraction import (
    Indication,
    VolumeConfig,
    detect_indications,
    expected_volume,
    extract_features,
    lambda_xi,
    merge_pairs,
    optimize_ellipse,
    optimize_region,
    scan_image,
    volume,
)
from .filtering import GaussianKernel, make_kernel, matched_filter
from .geometry import EllipseRegion, RectRegion, RegionPair, make_outer, outer_margin
from .imagery import SpecimenRecord, estimate_bias, load_image, load_manifest, save_image
from .nim import NimParams, PeakAmpParams, a90, fit_nim, fit_peakamp, nim_loglik, pod, pod_peakamp
from .pipeline import ImageScore, ScanConfig, score_image
from .simkit import SimConfig, inject_signal, make_noise, run_comparison, wilcoxon_signed_rank

__all__ = [
    "__version__",
    "MethodId",
    "calibrate_zth",
    "optimize_rectangle",
    "peak_amplitude",
    "Decision",
    "DetectionPolicy",
    "calibrate_alpha",
    "classify_dataset",
    "d_metric",
    "decide",
    "MatchedFilter",
    "NoiseInterferenceModel",
    "PeakAmplitudeDetector",
    "SNRFlawDetector",
    "FlawScanError",
    "Indication",
    "VolumeConfig",
    "detect_indications",
    "expected_volume",
    "extract_features",
    "lambda_xi",
    "merge_pairs",
    "optimize_ellipse",
    "optimize_region",
    "scan_image",
    "volume",
    "GaussianKernel",
    "make_kernel",
    "matched_filter",
    "EllipseRegion",
    "RectRegion",
    "RegionPair",
    "make_outer",
    "outer_margin",
    "SpecimenRecord",
    "estimate_bias",
    "load_image",
    "load_manifest",
    "save_image",
    "NimParams",
    "PeakAmpParams",
    "a90",
    "fit_nim",
    "fit_peakamp",
    "nim_loglik",
    "pod",
    "pod_peakamp",
    "ImageScore",
    "ScanConfig",
    "score_image",
    "SimConfig",
    "inject_signal",
    "make_noise",
    "run_comparison",
    "wilcoxon_signed_rank",
]
