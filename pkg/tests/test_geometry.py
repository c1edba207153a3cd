import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flawscan.exceptions import ParameterError
from flawscan.geometry import (
    EllipseRegion,
    RectRegion,
    make_outer,
    outer_margin,
    region_from_dict,
)

positive = st.floats(0.05, 50.0, allow_nan=False)


class TestContains:
    def test_circle(self):
        c = EllipseRegion(10, 10, 3, 3, 0)
        assert c.contains(10, 10)
        assert not c.contains(10, 14)

    def test_rotation_swaps_axes(self):
        e = EllipseRegion(10, 10, 4, 1, math.pi / 2)
        assert e.contains(10, 13)
        assert not e.contains(13, 10)

    def test_thin_ellipse(self):
        assert not EllipseRegion(10, 10, 4, 0.4, 0).contains(10, 11)

    def test_rectangle_corners(self):
        r = RectRegion(5, 5, 2, 1, 0)
        assert r.contains(7, 6) and r.contains(3, 4)
        assert not r.contains(8, 5) and not r.contains(5, 7)

    @settings(max_examples=60, deadline=None)
    @given(positive, positive, st.floats(-10, 10), st.integers(-8, 8), st.integers(-8, 8))
    def test_half_turn_invariance(self, a, b, theta, du, dv):
        c, s = math.cos(theta), math.sin(theta)
        q = ((du * c + dv * s) / a) ** 2 + ((dv * c - du * s) / b) ** 2
        if abs(q - 1.0) < 1e-9:
            return  # pixel center on the boundary: rounding decides
        e1, e2 = EllipseRegion(du, dv, a, b, theta), EllipseRegion(du, dv, a, b, theta + math.pi)
        assert e1.contains(0, 0) == e2.contains(0, 0) == (q <= 1.0)


class TestCanonical:
    def test_swap_axes(self):
        e = EllipseRegion(0, 0, 2, 5, 0.3)
        assert (e.a, e.b) == (5, 2)
        assert e.theta == pytest.approx(0.3 + math.pi / 2)

    def test_wrap(self):
        assert EllipseRegion(0, 0, 3, 1, -0.25).theta == pytest.approx(math.pi - 0.25)
        assert EllipseRegion(0, 0, 3, 1, 3 * math.pi).theta == pytest.approx(0.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            EllipseRegion(0, 0, 0, 1)

    @settings(max_examples=60, deadline=None)
    @given(positive, positive, st.floats(-20, 20))
    def test_invariants(self, a, b, theta):
        e = EllipseRegion(1, 2, a, b, theta)
        assert e.a >= e.b > 0
        assert 0 <= e.theta < math.pi

    def test_dict_round_trip(self):
        for r in (EllipseRegion(1.5, 2, 4, 2, 0.7), RectRegion(3, 4, 5, 1, 2.0)):
            d = r.to_dict()
            assert set(d) == {"shape", "cu", "cv", "a", "b", "theta"}
            assert region_from_dict(d) == r


class TestRasterize:
    def test_small_circle(self):
        pix = EllipseRegion(5, 5, 1.1, 1.1).rasterize((11, 11))
        assert sorted(map(tuple, pix)) == [(4, 5), (5, 4), (5, 5), (5, 6), (6, 5)]

    def test_corner_clipping(self):
        pix = EllipseRegion(0, 0, 2.5, 2.5).rasterize((10, 10))
        assert len(pix) > 0
        assert np.all(pix >= 0)
        full = EllipseRegion(5, 5, 2.5, 2.5).rasterize((11, 11))
        # in-bounds quadrant: u, v >= 0 of a disk with 21 pixels
        assert len(pix) == sum(1 for u, v in full if u >= 5 and v >= 5)

    def test_subpixel_region_may_be_empty(self):
        assert len(EllipseRegion(5.5, 5.5, 0.3, 0.3).rasterize((10, 10))) == 0

    def test_clipped_fraction(self):
        assert EllipseRegion(10, 10, 3, 2).clipped_fraction((21, 21)) == 0.0
        assert 0.6 < EllipseRegion(0, 0, 4, 4).clipped_fraction((21, 21)) < 0.8

    @pytest.mark.parametrize("a,b", [(10, 10), (15, 10), (20, 12)])
    def test_pixel_count_approaches_area(self, a, b):
        e = EllipseRegion(40, 40, a, b, 0.4)
        assert abs(e.mask((81, 81)).sum() - e.area) / e.area < 0.02


class TestOuter:
    def test_circle_margin(self):
        assert outer_margin(3.0, 3.0) == pytest.approx(3.0 * (math.sqrt(2) - 1), abs=1e-12)

    def test_four_by_two(self):
        d = outer_margin(4.0, 2.0)
        assert d == pytest.approx((-6 + math.sqrt(68)) / 2, abs=1e-12)
        assert (4 + d) * (2 + d) == pytest.approx(16.0, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(positive, positive)
    def test_area_doubles(self, a, b):
        d = outer_margin(a, b)
        assert d > 0
        assert (a + d) * (b + d) / (a * b) == pytest.approx(2.0, abs=1e-12)

    def test_pair_shares_center_and_angle(self):
        for inner in (EllipseRegion(3, 4, 5, 2, 1.0), RectRegion(3, 4, 5, 2, 1.0)):
            pair = make_outer(inner)
            assert pair.outer.center == inner.center and pair.outer.theta == inner.theta
            assert pair.outer.a == pytest.approx(inner.a + pair.delta)
            assert pair.outer.area == pytest.approx(2 * inner.area)
            assert not (pair.annulus_mask((20, 20)) & inner.mask((20, 20))).any()
