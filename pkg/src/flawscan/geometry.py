"""Parametric ellipse/rectangle regions, rasterization and the equal-area
outer region.

Coordinates follow :mod:`flawscan.imagery`: ``u`` is the column, ``v`` the
row, and a region's ``theta`` is the angle of its major axis measured from
the ``u`` axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "Region",
    "EllipseRegion",
    "RectRegion",
    "RegionPair",
    "outer_margin",
    "make_outer",
    "membership",
    "region_from_dict",
]


def _wrap_angle(theta):
    t = math.fmod(float(theta), math.pi)
    if t < 0:
        t += math.pi
    if t >= math.pi:
        t = 0.0
    return t


def membership(shape, dx, dy, a, b, theta):
    """Vectorized pixel-center membership test.

    ``dx``/``dy`` are pixel offsets from the region center (any broadcastable
    shape); ``a``, ``b``, ``theta`` may be arrays, in which case a leading
    axis is added for them.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if a.ndim:
        extra = (slice(None),) + (np.newaxis,) * np.ndim(dx)
        a, b, theta = a[extra], b[extra], theta[extra]
    c, s = np.cos(theta), np.sin(theta)
    xr = dx * c + dy * s
    yr = dy * c - dx * s
    if shape == "ellipse":
        return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0
    if shape == "rectangle":
        return (np.abs(xr) <= a) & (np.abs(yr) <= b)
    raise ParameterError(f"unknown region shape {shape!r}")


@dataclass(frozen=True)
class Region:
    """Base class for a rotated region with half-extents ``a >= b``.

    Construction canonicalizes the parameters: if ``b > a`` the axes are
    swapped and ``theta`` rotated by a quarter turn, then ``theta`` is wrapped
    into ``[0, pi)``.
    """

    cu: float
    cv: float
    a: float
    b: float
    theta: float = 0.0

    shape = "region"

    def __post_init__(self):
        a, b, theta = float(self.a), float(self.b), float(self.theta)
        if not (a > 0 and b > 0) or not all(map(math.isfinite, (a, b, theta))):
            raise ParameterError(f"region half-extents must be positive, got a={a}, b={b}")
        if b > a:
            a, b = b, a
            theta += math.pi / 2
        object.__setattr__(self, "cu", float(self.cu))
        object.__setattr__(self, "cv", float(self.cv))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", _wrap_angle(theta))

    @property
    def center(self):
        return (self.cu, self.cv)

    @property
    def area(self):
        raise NotImplementedError

    def contains(self, u, v):
        """True iff pixel ``(u, v)``'s center lies in the region."""
        return bool(
            membership(self.shape, u - self.cu, v - self.cv, self.a, self.b, self.theta)
        )

    def mask(self, shape):
        """Boolean mask of member pixels for an image of ``shape`` (rows, cols)."""
        n_rows, n_cols = shape
        dy = np.arange(n_rows, dtype=np.float64)[:, None] - self.cv
        dx = np.arange(n_cols, dtype=np.float64)[None, :] - self.cu
        return membership(self.shape, dx, dy, self.a, self.b, self.theta)

    def rasterize(self, shape):
        """In-bounds member pixels as an ``(n, 2)`` integer array of ``(u, v)``."""
        v, u = np.nonzero(self.mask(shape))
        return np.column_stack([u, v])

    def clipped_fraction(self, shape):
        """Fraction of the region's lattice pixels that fall outside the image."""
        r = math.ceil(math.hypot(self.a, self.b)) + 1
        u0, v0 = math.floor(self.cu) - r, math.floor(self.cv) - r
        uu = np.arange(u0, u0 + 2 * r + 2, dtype=np.float64)
        vv = np.arange(v0, v0 + 2 * r + 2, dtype=np.float64)
        m = membership(
            self.shape, uu[None, :] - self.cu, vv[:, None] - self.cv, self.a, self.b, self.theta
        )
        total = int(m.sum())
        if total == 0:
            return 0.0
        inside = m[:, (uu >= 0) & (uu < shape[1])][(vv >= 0) & (vv < shape[0]), :]
        return 1.0 - inside.sum() / total

    def grow(self, delta):
        return replace(self, a=self.a + delta, b=self.b + delta)

    def to_dict(self):
        return {
            "shape": self.shape,
            "cu": self.cu,
            "cv": self.cv,
            "a": self.a,
            "b": self.b,
            "theta": self.theta,
        }


@dataclass(frozen=True)
class EllipseRegion(Region):
    shape = "ellipse"

    @property
    def area(self):
        return math.pi * self.a * self.b


@dataclass(frozen=True)
class RectRegion(Region):
    shape = "rectangle"

    @property
    def area(self):
        return 4.0 * self.a * self.b


_SHAPES = {"ellipse": EllipseRegion, "rectangle": RectRegion}


def region_from_dict(d):
    try:
        cls = _SHAPES[d["shape"]]
    except KeyError:
        raise ParameterError(f"unknown region shape {d.get('shape')!r}") from None
    return cls(d["cu"], d["cv"], d["a"], d["b"], d.get("theta", 0.0))


def make_region(shape, cu, cv, a, b, theta=0.0):
    return _SHAPES[shape](cu, cv, a, b, theta)


def outer_margin(a, b):
    """Margin ``delta`` such that ``(a + delta) * (b + delta) == 2 * a * b``."""
    return (-(a + b) + math.sqrt(a * a + b * b + 6.0 * a * b)) / 2.0


@dataclass(frozen=True)
class RegionPair:
    """An inner region and the concentric outer region of twice its area."""

    inner: Region
    outer: Region
    delta: float

    def annulus_mask(self, shape):
        return self.outer.mask(shape) & ~self.inner.mask(shape)

    def to_dict(self):
        return {"inner": self.inner.to_dict(), "outer": self.outer.to_dict(), "delta": self.delta}


def make_outer(inner):
    """Pair ``inner`` with the outer region whose frame matches its area."""
    if not (inner.a > 0 and inner.b > 0):
        raise ParameterError("inner region must have positive half-extents")
    delta = outer_margin(inner.a, inner.b)
    return RegionPair(inner=inner, outer=inner.grow(delta), delta=delta)
