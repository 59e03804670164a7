"""Small planar geometry helpers shared by the scene builder and the world model.

Coordinates are metres in a local east/north frame. Polygons are sequences of
``(x, y)`` vertices without a repeated closing vertex.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def polyline_length(points: Sequence[Sequence[float]]) -> float:
    return sum(dist(points[i], points[i + 1]) for i in range(len(points) - 1))


def signed_area(poly: Sequence[Sequence[float]]) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def centroid(poly: Sequence[Sequence[float]]) -> Point:
    a = signed_area(poly)
    if abs(a) < 1e-12:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return (sum(xs) / len(xs), sum(ys) / len(ys))
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    return (cx / (6 * a), cy / (6 * a))


def closest_point_on_segment(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> tuple[Point, float]:
    """Return the closest point on segment ``ab`` to ``p`` and its parameter in [0, 1]."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return (ax, ay), 0.0
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return (ax + t * dx, ay + t * dy), t


def closest_point_on_polyline(p: Sequence[float], line: Sequence[Sequence[float]]) -> tuple[Point, float, float]:
    """Closest point on a polyline: ``(point, distance, arc length along the line)``."""
    best = (tuple(line[0]), math.inf, 0.0)
    arc = 0.0
    for i in range(len(line) - 1):
        q, t = closest_point_on_segment(p, line[i], line[i + 1])
        seg = dist(line[i], line[i + 1])
        d = dist(p, q)
        if d < best[1]:
            best = (q, d, arc + t * seg)
        arc += seg
    return best


def point_at_arc(line: Sequence[Sequence[float]], s: float) -> tuple[Point, float]:
    """Point at arc length ``s`` along ``line`` and the local heading there."""
    if s <= 0.0:
        a, b = line[0], line[1]
        return (float(a[0]), float(a[1])), math.atan2(b[1] - a[1], b[0] - a[0])
    acc = 0.0
    for i in range(len(line) - 1):
        a, b = line[i], line[i + 1]
        seg = dist(a, b)
        if acc + seg >= s and seg > 0.0:
            t = (s - acc) / seg
            return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])), math.atan2(b[1] - a[1], b[0] - a[0])
        acc += seg
    a, b = line[-2], line[-1]
    return (float(b[0]), float(b[1])), math.atan2(b[1] - a[1], b[0] - a[0])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    def on_seg(a, b, c):
        return min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12 and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def is_simple_polygon(poly: Sequence[Sequence[float]]) -> bool:
    """True when the ring has ≥ 3 vertices, non-zero area and no self-intersections."""
    n = len(poly)
    if n < 3 or abs(signed_area(poly)) < 1e-9:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return False
    return True


def polygon_edges(polys: Iterable[Sequence[Sequence[float]]]) -> np.ndarray:
    """Stack all polygon edges into an ``(E, 4)`` array of ``x0, y0, x1, y1``."""
    rows = []
    for poly in polys:
        n = len(poly)
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            rows.append((x0, y0, x1, y1))
    if not rows:
        return np.zeros((0, 4))
    return np.asarray(rows, dtype=float)


def ray_hits(origin: Sequence[float], angles: np.ndarray, edges: np.ndarray, max_range: float) -> np.ndarray:
    """First-hit distance of each ray against a set of edges; ``inf`` for a miss within range."""
    out = np.full(len(angles), np.inf)
    if len(edges) == 0 or len(angles) == 0:
        return out
    ox, oy = origin
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    ex = (edges[:, 2] - edges[:, 0])[None, :]
    ey = (edges[:, 3] - edges[:, 1])[None, :]
    wx = (edges[:, 0] - ox)[None, :]
    wy = (edges[:, 1] - oy)[None, :]
    den = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
    ok = (np.abs(den) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0) & (t <= max_range)
    t = np.where(ok, t, np.inf)
    return np.minimum(out, t.min(axis=1))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
