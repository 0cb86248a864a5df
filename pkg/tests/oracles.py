"""Reference implementations used only by the tests.

They are deliberately naive and share no code with the package: polygon
overlap by edge crossing plus point containment, and collision time by
fixed-step marching.
"""

from __future__ import annotations

import math

import numpy as np


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    return ((d1 == 0 and _on_segment(q1, q2, p1)) or (d2 == 0 and _on_segment(q1, q2, p2)) or
            (d3 == 0 and _on_segment(p1, p2, q1)) or (d4 == 0 and _on_segment(p1, p2, q2)))


def point_in_polygon(p, poly) -> bool:
    """Ray casting; boundary points count as inside only via edge tests elsewhere."""
    inside = False
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if (a[1] > p[1]) != (b[1] > p[1]):
            x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if x > p[0]:
                inside = not inside
    return inside


def polygons_overlap(a, b) -> bool:
    a = [tuple(map(float, p)) for p in a]
    b = [tuple(map(float, p)) for p in b]
    for i in range(len(a)):
        for j in range(len(b)):
            if segments_intersect(a[i], a[(i + 1) % len(a)], b[j], b[(j + 1) % len(b)]):
                return True
    return point_in_polygon(a[0], b) or point_in_polygon(b[0], a)


def _cross(o, p, q):
    return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0])


def _overlap_many(a: np.ndarray, bs: np.ndarray) -> np.ndarray:
    """Overlap of a fixed convex quad ``a`` with each quad in ``bs`` (T, 4, 2),
    by proper edge crossings or vertex containment."""
    hit = np.zeros(len(bs), dtype=bool)
    for i in range(4):
        p1, p2 = a[i], a[(i + 1) % 4]
        for j in range(4):
            q1, q2 = bs[:, j], bs[:, (j + 1) % 4]
            d1, d2 = _cross(q1, q2, p1), _cross(q1, q2, p2)
            d3, d4 = _cross(p1, p2, q1), _cross(p1, p2, q2)
            hit |= (d1 * d2 < 0) & (d3 * d4 < 0)

    def contains(poly, pts):
        # poly (..., 4, 2), pts (..., 2); convex, either winding
        signs = np.stack([_cross(poly[..., k, :], poly[..., (k + 1) % 4, :], pts) for k in range(4)], -1)
        return np.all(signs >= 0, axis=-1) | np.all(signs <= 0, axis=-1)

    for k in range(4):
        hit |= contains(a[None], bs[:, k])
        hit |= contains(bs, np.broadcast_to(a[k], (len(bs), 2)))
    return hit


def marching_collision_time(a, va, b, vb, dt: float = 1e-3, t_max: float = 20.0):
    """Collision time by sampling the static overlap test every ``dt`` over
    [0, t_max]. Returns the midpoint between the last free sample and the
    first overlapping one (0 if overlapping at t = 0), else None."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rel = np.asarray(vb, dtype=float) - np.asarray(va, dtype=float)
    t = np.arange(int(round(t_max / dt)) + 1) * dt
    bs = b[None] + t[:, None, None] * rel
    hit = _overlap_many(a, bs)
    if not hit.any():
        return None
    k = int(np.argmax(hit))
    return 0.0 if k == 0 else (k - 0.5) * dt


def rect(cx, cy, heading, length, width):
    """Corners FL, FR, RR, RL written out longhand."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    return np.array([
        [cx + hl * c - hw * s, cy + hl * s + hw * c],
        [cx + hl * c + hw * s, cy + hl * s - hw * c],
        [cx - hl * c + hw * s, cy - hl * s - hw * c],
        [cx - hl * c - hw * s, cy - hl * s + hw * c],
    ])
