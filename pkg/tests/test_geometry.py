import math

import numpy as np
import pytest

from uwbloc.geometry import (
    AnchorLayout,
    CollinearAnchorsError,
    DEFAULT_ANCHORS,
    NonFiniteRangeError,
    PointMM,
    RangeTriple,
    distance,
    triangle_area,
    trilaterate,
)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        PointMM(math.nan, 0.0)
    with pytest.raises(ValueError):
        PointMM(0.0, math.inf)


def test_point_is_within_includes_borders():
    assert PointMM(0.0, 0.0).is_within(1000.0, 2000.0)
    assert PointMM(1000.0, 2000.0).is_within(1000.0, 2000.0)
    assert not PointMM(1000.0001, 0.0).is_within(1000.0, 2000.0)
    assert not PointMM(0.0, -0.0001).is_within(1000.0, 2000.0)


def test_distance_known_value():
    # 800^2 + 1800^2 = 3880000
    d = distance(PointMM(100.0, 100.0), PointMM(900.0, 1900.0))
    assert math.isclose(d, math.sqrt(3880000.0), rel_tol=1e-12)


def test_triangle_area_right_triangle():
    a = PointMM(0.0, 0.0)
    b = PointMM(0.0, 2000.0)
    c = PointMM(1000.0, 0.0)
    assert triangle_area(a, b, c) == 1_000_000.0


def test_default_anchors_are_the_corner_deployment():
    assert DEFAULT_ANCHORS.a.as_tuple() == (0.0, 0.0)
    assert DEFAULT_ANCHORS.b.as_tuple() == (0.0, 2000.0)
    assert DEFAULT_ANCHORS.c.as_tuple() == (1000.0, 0.0)


def test_anchor_layout_rejects_collinear():
    with pytest.raises(CollinearAnchorsError):
        AnchorLayout(PointMM(0.0, 0.0), PointMM(500.0, 500.0), PointMM(1000.0, 1000.0))


def test_anchor_layout_coerces_tuples():
    layout = AnchorLayout((0.0, 0.0), (0.0, 10.0), (10.0, 0.0))
    assert isinstance(layout.a, PointMM)
    assert layout.b.y == 10.0


def test_range_triple_validation():
    with pytest.raises(NonFiniteRangeError):
        RangeTriple(math.nan, 1.0, 1.0)
    with pytest.raises(NonFiniteRangeError):
        RangeTriple(1.0, math.inf, 1.0)
    with pytest.raises(ValueError):
        RangeTriple(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        RangeTriple(1.0, 1.0, -3.0)
    assert RangeTriple(1.0, 2.0, 3.0).as_tuple() == (1.0, 2.0, 3.0)


def test_trilaterate_hand_checked_case():
    # A(0,0), B(0,10), C(10,0), tag at (3,4): the 2x2 system solves exactly.
    layout = AnchorLayout(PointMM(0.0, 0.0), PointMM(0.0, 10.0), PointMM(10.0, 0.0))
    ranges = RangeTriple(5.0, math.sqrt(45.0), math.sqrt(65.0))
    est = trilaterate(layout, ranges)
    assert math.isclose(est.x, 3.0, abs_tol=1e-9)
    assert math.isclose(est.y, 4.0, abs_tol=1e-9)


def test_trilaterate_recovers_random_points():
    rng = np.random.default_rng(11)
    anchor_points = DEFAULT_ANCHORS.as_tuple()
    for _ in range(50):
        p = PointMM(float(rng.uniform(1.0, 999.0)), float(rng.uniform(1.0, 1999.0)))
        ranges = RangeTriple(*(distance(p, a) for a in anchor_points))
        est = trilaterate(DEFAULT_ANCHORS, ranges)
        assert distance(est, p) < 1e-9


def test_trilaterate_result_is_not_clamped():
    # ranges consistent with a point outside the 1m x 2m area
    p = PointMM(1500.0, 2500.0)
    ranges = RangeTriple(*(distance(p, a) for a in DEFAULT_ANCHORS.as_tuple()))
    est = trilaterate(DEFAULT_ANCHORS, ranges)
    assert est.x > 1000.0 and est.y > 2000.0


def test_trilaterate_rejects_non_finite_ranges():
    with pytest.raises(NonFiniteRangeError):
        RangeTriple(math.inf, 100.0, 100.0)
