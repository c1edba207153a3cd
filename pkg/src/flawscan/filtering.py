"""Gaussian matched filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import DimensionError, ParameterError
from .imagery import check_image

__all__ = ["FWHM_PER_SIGMA", "DEFAULT_FWHM", "GaussianKernel", "make_kernel", "matched_filter"]

#: FWHM of a Gaussian expressed in units of its standard deviation, rounded
#: the way NDE practice quotes it.
FWHM_PER_SIGMA = 2.355
DEFAULT_FWHM = 4.71


@dataclass(frozen=True)
class GaussianKernel:
    fwhm: float
    sigma: float
    half_width: int
    weights: np.ndarray

    @property
    def size(self):
        return 2 * self.half_width + 1


def make_kernel(fwhm):
    """Build a unit-sum, radially symmetric Gaussian kernel.

    The kernel is truncated at ``ceil(3 * sigma)`` pixels and renormalized,
    with ``sigma = fwhm / 2.355``.
    """
    fwhm = float(fwhm)
    if not fwhm > 0 or not math.isfinite(fwhm):
        raise ParameterError(f"fwhm must be positive, got {fwhm}")
    sigma = fwhm / FWHM_PER_SIGMA
    half = max(1, math.ceil(3.0 * sigma))
    d = np.arange(-half, half + 1, dtype=np.float64)
    r2 = d[:, None] ** 2 + d[None, :] ** 2
    w = np.exp(-r2 / (2.0 * sigma * sigma))
    w /= w.sum()
    w.setflags(write=False)
    return GaussianKernel(fwhm=fwhm, sigma=sigma, half_width=half, weights=w)


def matched_filter(img, kernel, mode="reflect"):
    """Correlate an image with a matched-filter kernel.

    Parameters
    ----------
    img : array_like, 2-D
    kernel : GaussianKernel or float
        A float is taken as the FWHM in pixels.
    mode : str
        Boundary handling passed to :func:`scipy.ndimage.correlate`. The
        default ``"reflect"`` mirrors about the pixel edge (``d c b a | a b c d``).

    Returns
    -------
    ndarray
        Same shape as ``img``.
    """
    img = check_image(img)
    if not isinstance(kernel, GaussianKernel):
        kernel = make_kernel(kernel)
    if kernel.half_width >= min(img.shape):
        raise DimensionError(
            f"kernel half-width {kernel.half_width} too large for image {img.shape}"
        )
    # symmetric kernel: correlation and convolution coincide
    return ndimage.correlate(img, kernel.weights, mode=mode)
