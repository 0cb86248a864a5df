import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import marching_collision_time, polygons_overlap, rect
from trajstd.errors import DataError
from trajstd.geometry import (obb_corners, polygon_clearance, polygons_intersect,
                              swept_collision_time, swept_collision_time_batch)

coord = st.floats(-50, 50)
angle = st.floats(-math.pi, math.pi)
size = st.floats(0.5, 8.0)


def test_corners_axis_aligned():
    c = obb_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    np.testing.assert_allclose(c, [[2, 1], [2, -1], [-2, -1], [-2, 1]], atol=1e-12)


def test_corners_quarter_turn():
    c = obb_corners(0.0, 0.0, math.pi / 2, 4.0, 2.0)
    np.testing.assert_allclose(c, [[-1, 2], [1, 2], [1, -2], [-1, -2]], atol=1e-12)


@given(coord, coord, angle, size, size)
def test_corner_mean_is_center(x, y, h, length, width):
    c = obb_corners(x, y, h, length, width)
    np.testing.assert_allclose(c.mean(axis=0), [x, y], atol=1e-9)
    np.testing.assert_allclose(c, rect(x, y, h, length, width), atol=1e-9)


def test_corners_broadcast_shape():
    c = obb_corners(np.zeros(5), np.zeros(5), np.linspace(0, 1, 5), 4.0, 2.0)
    assert c.shape == (5, 4, 2)


@settings(max_examples=300)
@given(coord, coord, angle, size, size, angle, size, size)
def test_static_intersection_matches_oracle(x, y, h1, l1, w1, h2, l2, w2):
    a = rect(0, 0, h1, l1, w1)
    b = rect(x / 5, y / 5, h2, l2, w2)
    assert polygons_intersect(a, b) == polygons_overlap(a, b)


def test_clearance_zero_iff_touching():
    a = rect(0, 0, 0, 4, 2)
    assert polygon_clearance(a, rect(4, 0, 0, 4, 2)) == pytest.approx(0.0, abs=1e-12)
    assert polygons_intersect(a, rect(4, 0, 0, 4, 2))
    assert polygon_clearance(a, rect(5, 0, 0, 4, 2)) == pytest.approx(1.0)
    assert polygon_clearance(a, rect(1, 0, 0.3, 4, 2)) == 0.0


def test_swept_head_on_line():
    # two 4x2 boxes, bumper gap 25 m, closing at 10 m/s
    a = rect(0, 0, 0, 4, 2)
    b = rect(29, 0, 0, 4, 2)
    assert swept_collision_time(a, (10, 0), b, (0, 0)) == pytest.approx(2.5, abs=1e-12)


def test_swept_same_velocity_never():
    a = rect(0, 0, 0, 4, 2)
    b = rect(10, 0, 0, 4, 2)
    assert swept_collision_time(a, (5, 1), b, (5, 1)) is None


def test_swept_overlapping_is_zero():
    a = rect(0, 0, 0, 4, 2)
    b = rect(1, 0.5, 0.4, 4, 2)
    assert swept_collision_time(a, (0, 0), b, (3, 3)) == 0.0


def test_swept_moving_apart_is_none():
    a = rect(0, 0, 0, 4, 2)
    b = rect(10, 0, 0, 4, 2)
    assert swept_collision_time(a, (0, 0), b, (1, 0)) is None


def test_swept_degenerate_raises():
    a = rect(0, 0, 0, 4, 2)
    flat = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
    with pytest.raises(DataError):
        swept_collision_time(a, (0, 0), flat, (1, 0))


@settings(max_examples=200)
@given(coord, coord, angle, angle, st.floats(-10, 10), st.floats(-10, 10),
       st.floats(-10, 10), st.floats(-10, 10))
def test_swept_symmetric(x, y, h1, h2, vax, vay, vbx, vby):
    a = rect(0, 0, h1, 4.5, 1.8)
    b = rect(x, y, h2, 4.0, 2.0)
    t1 = swept_collision_time(a, (vax, vay), b, (vbx, vby))
    t2 = swept_collision_time(b, (vbx, vby), a, (vax, vay))
    if t1 is None:
        assert t2 is None
    else:
        assert t2 == pytest.approx(t1, abs=1e-9)


def test_batch_matches_scalar():
    rng = np.random.default_rng(7)
    a = np.stack([rect(0, 0, rng.uniform(-3, 3), 4, 2) for _ in range(200)])
    b = np.stack([rect(*rng.uniform(-30, 30, 2), rng.uniform(-3, 3), 5, 2) for _ in range(200)])
    va = rng.uniform(-10, 10, (200, 2))
    vb = rng.uniform(-10, 10, (200, 2))
    batch = swept_collision_time_batch(a, va, b, vb)
    for i in range(200):
        t = swept_collision_time(a[i], va[i], b[i], vb[i])
        if t is None:
            assert np.isnan(batch[i])
        else:
            assert batch[i] == pytest.approx(t, abs=1e-9)


def test_swept_against_marching_oracle_small():
    rng = np.random.default_rng(99)
    for _ in range(40):
        a = rect(0, 0, rng.uniform(-3, 3), 4, 2)
        b = rect(*rng.uniform(-20, 20, 2), rng.uniform(-3, 3), 4, 2)
        va, vb = rng.uniform(-8, 8, 2), rng.uniform(-8, 8, 2)
        t = swept_collision_time(a, va, b, vb)
        t = None if t is not None and t > 20 else t
        ref = marching_collision_time(a, va, b, vb)
        assert (t is None) == (ref is None)
        if t is not None:
            assert abs(t - ref) <= 5e-4


def test_subnormal_closing_speed_never_collides():
    a = rect(0.0, 0.0, 0.0, 3.0, 2.0)
    b = rect(4.0, 0.0, 0.0, 3.0, 2.0)
    assert swept_collision_time(a, (2.2e-313, 0.0), b, (0.0, 0.0)) is None
    batch = swept_collision_time_batch(a[None], np.array([[2.2e-313, 0.0]]), b[None], np.zeros((1, 2)))
    assert np.isnan(batch[0])
