"""Synthetic image generators and brute-force oracles shared by the tests."""

import math

import numpy as np

from flawscan.geometry import EllipseRegion


def ellipse_plateau(shape=(30, 30), center=(15, 15), a=6.0, b=3.0, theta=math.pi / 4, contrast=5.0):
    """Noise-free ``tau``: ``contrast`` inside the ellipse, 0 outside."""
    return contrast * EllipseRegion(center[0], center[1], a, b, theta).mask(shape).astype(float)


def gaussian_bump(shape, center, peak, sigma):
    vv, uu = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    return peak * np.exp(-((uu - center[0]) ** 2 + (vv - center[1]) ** 2) / (2.0 * sigma * sigma))


def two_tip_image(seed, amp=8.0, ridge=7.0, sep=6.0, noise=1.0, shape=(30, 30)):
    """Two Gaussian tips joined by a hot horizontal ridge, plus white noise."""
    rng = np.random.default_rng(seed)
    cv = shape[0] / 2.0
    c1 = (shape[1] / 2.0 - sep / 2.0, cv)
    c2 = (shape[1] / 2.0 + sep / 2.0, cv)
    img = gaussian_bump(shape, c1, amp, 1.2) + gaussian_bump(shape, c2, amp, 1.2)
    vv, uu = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    between = (uu >= c1[0]) & (uu <= c2[0])
    img = img + ridge * np.exp(-((vv - cv) ** 2) / (2.0 * 0.8**2)) * between
    return img + noise * rng.standard_normal(shape)


def naive_filter(img, weights):
    """Double-loop correlation with mirror (``d c b a | a b c d``) boundaries."""
    n_rows, n_cols = img.shape
    h = weights.shape[0] // 2

    def reflect(i, n):
        while i < 0 or i >= n:
            i = -i - 1 if i < 0 else 2 * n - i - 1
        return i

    out = np.zeros_like(img, dtype=float)
    for r in range(n_rows):
        for c in range(n_cols):
            acc = 0.0
            for dr in range(-h, h + 1):
                for dc in range(-h, h + 1):
                    acc += weights[dr + h, dc + h] * img[reflect(r + dr, n_rows), reflect(c + dc, n_cols)]
            out[r, c] = acc
    return out


def naive_volume(img, mask, lam):
    """Regularized volume by explicit accumulation over pixels."""
    outside = [img[i, j] for i in range(img.shape[0]) for j in range(img.shape[1]) if not mask[i, j]]
    mu = sum(outside) / len(outside)
    v = 0.0
    for i in range(img.shape[0]):
        for j in range(img.shape[1]):
            if mask[i, j]:
                y = img[i, j] - mu
                v += y if y > 0 else lam * y
    return v


def angle_error(theta, truth):
    """Distance between two axis orientations, modulo pi."""
    return abs((theta - truth + math.pi / 2) % math.pi - math.pi / 2)
