"""Oriented-box geometry: corner construction, separating-axis tests and the
exact constant-velocity sweep used for two-dimensional TTC.

Boxes are ``(4, 2)`` arrays of corners ordered front-left, front-right,
rear-right, rear-left. Batched routines take ``(n, 4, 2)``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError

_AREA_EPS = 1e-12


def obb_corners(x, y, heading, length, width) -> np.ndarray:
    """Corners of the box centred at (x, y); broadcasts over array inputs.

    Returns an array of shape ``broadcast_shape + (4, 2)``.
    """
    x, y, heading, length, width = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x, y, heading, length, width)))
    ux, uy = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    # u = (ux, uy), n = (-uy, ux)
    lx, ly = hl * ux, hl * uy
    wx, wy = -hw * uy, hw * ux
    out = np.empty(x.shape + (4, 2))
    out[..., 0, 0] = x + lx + wx
    out[..., 0, 1] = y + ly + wy
    out[..., 1, 0] = x + lx - wx
    out[..., 1, 1] = y + ly - wy
    out[..., 2, 0] = x - lx - wx
    out[..., 2, 1] = y - ly - wy
    out[..., 3, 0] = x - lx + wx
    out[..., 3, 1] = y - ly + wy
    return out


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counterclockwise order)."""
    p = np.asarray(poly, dtype=float)
    xs, ys = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple_quad(poly) -> bool:
    """True when the quadrilateral has nonzero area and no crossing edges."""
    p = np.asarray(poly, dtype=float)
    if p.shape != (4, 2) or not np.all(np.isfinite(p)):
        return False
    if abs(polygon_area(p)) <= _AREA_EPS:
        return False
    return not (_segments_cross(p[0], p[1], p[2], p[3])
                or _segments_cross(p[1], p[2], p[3], p[0]))


def _check_poly(poly: np.ndarray) -> None:
    if not np.all(np.isfinite(poly)):
        raise DataError("polygon has non-finite corners")
    if abs(polygon_area(poly)) <= _AREA_EPS:
        raise DataError("degenerate (zero-area) polygon")


def edge_normals(poly) -> np.ndarray:
    """Unit normals of the polygon edges, shape (m, 2)."""
    p = np.asarray(poly, dtype=float)
    e = np.roll(p, -1, axis=0) - p
    n = np.stack([-e[:, 1], e[:, 0]], axis=1)
    norm = np.hypot(n[:, 0], n[:, 1])
    keep = norm > 0
    return n[keep] / norm[keep, None]


def polygons_intersect(a, b) -> bool:
    """Static separating-axis test for two convex polygons; touching counts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for axis in np.vstack([edge_normals(a), edge_normals(b)]):
        pa = a @ axis
        pb = b @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    d = a + s * ab - p
    return math.hypot(d[0], d[1])


def polygon_clearance(a, b) -> float:
    """Minimum distance between two convex polygons (0 when they touch)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if polygons_intersect(a, b):
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        for v in p:
            for i in range(len(q)):
                best = min(best, _point_segment_distance(v, q[i], q[(i + 1) % len(q)]))
    return best


def swept_collision_time(obb_a, v_a, obb_b, v_b) -> float | None:
    """Earliest t >= 0 at which two convex polygons moving at constant
    velocity (no rotation) intersect, or None if they never do.

    Works in the frame of ``a``: ``b`` moves with the relative velocity.
    On every separating-axis candidate the projected intervals overlap during
    one closed time window; the polygons intersect exactly when all windows
    overlap, so the answer is the start of the intersection of the windows.
    """
    a = np.asarray(obb_a, dtype=float)
    b = np.asarray(obb_b, dtype=float)
    _check_poly(a)
    _check_poly(b)
    rel = np.asarray(v_b, dtype=float) - np.asarray(v_a, dtype=float)
    lo, hi = 0.0, math.inf
    for axis in np.vstack([edge_normals(a), edge_normals(b)]):
        pa = a @ axis
        pb = b @ axis
        a0, a1 = pa.min(), pa.max()
        b0, b1 = pb.min(), pb.max()
        s = float(rel @ axis)
        if s == 0.0:
            if b1 < a0 or a1 < b0:
                return None
            continue
        with np.errstate(over="ignore"):
            t_first = (a0 - b1) / s
            t_second = (a1 - b0) / s
        if t_first > t_second:
            t_first, t_second = t_second, t_first
        lo = max(lo, t_first)
        hi = min(hi, t_second)
        if lo > hi:
            return None
    # a closing speed so small that the time overflows never collides
    return float(lo) if math.isfinite(lo) else None


def swept_collision_time_batch(obb_a, v_a, obb_b, v_b) -> np.ndarray:
    """Vectorised :func:`swept_collision_time` over ``n`` pairs.

    Returns a float array with NaN where no collision occurs. Input boxes
    are assumed valid (callers validate once per track).
    """
    a = np.asarray(obb_a, dtype=float)
    b = np.asarray(obb_b, dtype=float)
    rel = np.asarray(v_b, dtype=float) - np.asarray(v_a, dtype=float)
    n = a.shape[0]
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    never = np.zeros(n, dtype=bool)
    for poly in (a, b):
        for k in range(4):
            e = poly[:, (k + 1) % 4] - poly[:, k]
            axis = np.stack([-e[:, 1], e[:, 0]], axis=1)
            axis /= np.hypot(axis[:, 0], axis[:, 1])[:, None]
            pa = np.einsum("nij,nj->ni", a, axis)
            pb = np.einsum("nij,nj->ni", b, axis)
            a0, a1 = pa.min(axis=1), pa.max(axis=1)
            b0, b1 = pb.min(axis=1), pb.max(axis=1)
            s = np.einsum("ni,ni->n", rel, axis)
            still = s == 0.0
            never |= still & ((b1 < a0) | (a1 < b0))
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                t1 = (a0 - b1) / s
                t2 = (a1 - b0) / s
            tf = np.where(still, -np.inf, np.minimum(t1, t2))
            ts = np.where(still, np.inf, np.maximum(t1, t2))
            lo = np.maximum(lo, tf)
            hi = np.minimum(hi, ts)
    out = np.where(never | (lo > hi) | ~np.isfinite(lo), np.nan, lo)
    return out
