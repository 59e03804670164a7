"""Shortest paths over the road segment graph, with point snapping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .geometry import Point, closest_point_on_polyline, dist, polyline_length


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class Snap:
    segment: int  # index into RoadNetwork.segments
    arc: float
    distance: float
    point: Point


class RoadNetwork:
    """Undirected graph whose vertices are segment end nodes.

    ``segments`` is a sequence of objects with ``centerline``, ``start_node``
    and ``end_node`` attributes (``geodata.RoadSegment``).
    """

    def __init__(self, segments: Sequence, snap_radius: float = 30.0):
        self.segments = list(segments)
        self.snap_radius = snap_radius
        self.lengths = [polyline_length(s.centerline) for s in self.segments]
        node_ids = sorted({s.start_node for s in self.segments} | {s.end_node for s in self.segments})
        self.node_ids = node_ids
        self.node_index = {n: i for i, n in enumerate(node_ids)}
        self.node_pos: dict[int, Point] = {}
        for s in self.segments:
            self.node_pos.setdefault(s.start_node, tuple(s.centerline[0]))
            self.node_pos.setdefault(s.end_node, tuple(s.centerline[-1]))
        # cheapest segment between each node pair
        self._edge: dict[tuple[int, int], int] = {}
        for k, s in enumerate(self.segments):
            u, v = self.node_index[s.start_node], self.node_index[s.end_node]
            key = (min(u, v), max(u, v))
            if u == v:
                continue
            if key not in self._edge or self.lengths[k] < self.lengths[self._edge[key]]:
                self._edge[key] = k
        n = len(node_ids)
        rows, cols, vals = [], [], []
        for (u, v), k in self._edge.items():
            rows += [u, v]
            cols += [v, u]
            vals += [self.lengths[k], self.lengths[k]]
        self._graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
        self._dist: np.ndarray | None = None
        self._pred: np.ndarray | None = None
        if self.segments:
            coords = np.concatenate([np.asarray(s.centerline, dtype=float) for s in self.segments])
            self._bbox = (coords[:, 0].min(), coords[:, 1].min(), coords[:, 0].max(), coords[:, 1].max())

    def _all_pairs(self):
        if self._dist is None:
            if len(self.node_ids) == 0:
                self._dist = np.zeros((0, 0))
                self._pred = np.zeros((0, 0), dtype=int)
            else:
                self._dist, self._pred = dijkstra(self._graph, directed=False, return_predecessors=True)
        return self._dist, self._pred

    def node_distance(self, a: int, b: int) -> float:
        d, _ = self._all_pairs()
        return float(d[self.node_index[a], self.node_index[b]])

    def snap(self, p: Sequence[float], max_distance: float | None = None) -> Snap:
        limit = self.snap_radius if max_distance is None else max_distance
        best: Snap | None = None
        for k, s in enumerate(self.segments):
            q, d, arc = closest_point_on_polyline(p, s.centerline)
            if best is None or d < best.distance - 1e-12:
                best = Snap(k, arc, d, q)
        if best is None or best.distance > limit:
            raise RoutingError(f"point ({p[0]:.1f}, {p[1]:.1f}) is not within {limit:g} m of a road")
        return best

    def _candidates(self, sn: Snap) -> list[tuple[int, float]]:
        s = self.segments[sn.segment]
        L = self.lengths[sn.segment]
        return [(self.node_index[s.start_node], sn.arc), (self.node_index[s.end_node], L - sn.arc)]

    def _best_route(self, sa: Snap, sb: Snap):
        d, _ = self._all_pairs()
        best = (math.inf, None)
        if sa.segment == sb.segment:
            best = (abs(sa.arc - sb.arc), "direct")
        for ua, ca in self._candidates(sa):
            for ub, cb in self._candidates(sb):
                total = ca + d[ua, ub] + cb
                if total < best[0] - 1e-12:
                    best = (total, (ua, ub))
        return best

    def path_length(self, a: Sequence[float], b: Sequence[float]) -> float:
        """On-road distance between the road projections of ``a`` and ``b``."""
        sa, sb = self.snap(a), self.snap(b)
        total, how = self._best_route(sa, sb)
        if how is None or not math.isfinite(total):
            raise RoutingError(f"no road path between ({a[0]:.1f}, {a[1]:.1f}) and ({b[0]:.1f}, {b[1]:.1f})")
        return float(total)

    def path(self, a: Sequence[float], b: Sequence[float]) -> list[Point]:
        """Polyline along the roads from the projection of ``a`` to that of ``b``."""
        sa, sb = self.snap(a), self.snap(b)
        total, how = self._best_route(sa, sb)
        if how is None or not math.isfinite(total):
            raise RoutingError(f"no road path between ({a[0]:.1f}, {a[1]:.1f}) and ({b[0]:.1f}, {b[1]:.1f})")
        if how == "direct":
            return _sub_polyline(self.segments[sa.segment].centerline, sa.arc, sb.arc)
        ua, ub = how
        pts: list[Point] = []
        seg_a = self.segments[sa.segment]
        end_arc = 0.0 if self.node_index[seg_a.start_node] == ua else self.lengths[sa.segment]
        pts += _sub_polyline(seg_a.centerline, sa.arc, end_arc)
        for u, v in self._node_path(ua, ub):
            k = self._edge[(min(u, v), max(u, v))]
            line = [tuple(p) for p in self.segments[k].centerline]
            if self.node_index[self.segments[k].start_node] != u:
                line.reverse()
            pts += line[1:]
        seg_b = self.segments[sb.segment]
        start_arc = 0.0 if self.node_index[seg_b.start_node] == ub else self.lengths[sb.segment]
        pts += _sub_polyline(seg_b.centerline, start_arc, sb.arc)[1:]
        return _dedupe(pts)

    def _node_path(self, u: int, v: int) -> list[tuple[int, int]]:
        _, pred = self._all_pairs()
        seq = [v]
        while seq[-1] != u:
            p = int(pred[u, seq[-1]])
            if p < 0:
                raise RoutingError("broken predecessor chain")
            seq.append(p)
        seq.reverse()
        return list(zip(seq[:-1], seq[1:]))


def _sub_polyline(line: Sequence[Sequence[float]], s0: float, s1: float) -> list[Point]:
    """Portion of ``line`` between arc lengths ``s0`` and ``s1`` (reversed when s1 < s0)."""
    if s1 < s0:
        return list(reversed(_sub_polyline(line, s1, s0)))
    out: list[Point] = []
    acc = 0.0
    for i in range(len(line) - 1):
        a, b = line[i], line[i + 1]
        seg = dist(a, b)
        lo, hi = acc, acc + seg
        if hi >= s0 and lo <= s1 and seg > 0:
            t0 = max(0.0, (s0 - lo) / seg)
            t1 = min(1.0, (s1 - lo) / seg)
            p0 = (a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1]))
            p1 = (a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1]))
            if not out:
                out.append(p0)
            out.append(p1)
        acc = hi
    if not out:
        from .geometry import point_at_arc

        p, _ = point_at_arc(line, s0)
        out = [p, p]
    return _dedupe(out) if len(_dedupe(out)) > 1 else [out[0], out[-1]]


def _dedupe(pts: list[Point]) -> list[Point]:
    out: list[Point] = []
    for p in pts:
        if not out or dist(out[-1], p) > 1e-9:
            out.append((float(p[0]), float(p[1])))
    return out
