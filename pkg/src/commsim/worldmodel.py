"""Read-only spatial queries over a loaded scene."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from .geodata import SceneBundle
from .geometry import Point, closest_point_on_segment, dist, polygon_edges, ray_hits
from .roadnet import RoadNetwork, RoutingError

GRID_CELL = 25.0


class WorldError(ValueError):
    pass


class WorldMap:
    """A scene bundle plus spatial indices. Treat as immutable after construction."""

    def __init__(self, bundle: SceneBundle):
        self.bundle = bundle
        self.buildings = {b.id: b for b in bundle.buildings}
        self.places = {p.id: p for p in bundle.places}
        self.place_by_name = {p.name: p for p in bundle.places}
        self.building_by_name = {b.name: b for b in bundle.buildings if b.name}
        self.bus_lines = {l.id: l for l in bundle.bus_lines}
        self.stations = {s.id: s for s in bundle.bike_stations}
        self.roads = RoadNetwork(bundle.roads)
        self._ids = sorted(self.buildings)
        self._polys = [Polygon(self.buildings[i].footprint) for i in self._ids]
        for p in self._polys:
            shapely.prepare(p)
        self._edges = [polygon_edges([self.buildings[i].footprint]) for i in self._ids]
        self._grid: dict[tuple[int, int], list[int]] = {}
        for k, bid in enumerate(self._ids):
            xs = [p[0] for p in self.buildings[bid].footprint]
            ys = [p[1] for p in self.buildings[bid].footprint]
            for cx in range(_cell(min(xs)), _cell(max(xs)) + 1):
                for cy in range(_cell(min(ys)), _cell(max(ys)) + 1):
                    self._grid.setdefault((cx, cy), []).append(k)
        self.stop_index: dict[int, list[tuple[int, int]]] = {}
        for line in bundle.bus_lines:
            for i, pid in enumerate(line.stops):
                self.stop_index.setdefault(pid, []).append((line.id, i))
        self._check()

    def _check(self):
        for pid in self.stop_index:
            if pid not in self.places:
                raise WorldError(f"bus stop references unknown place {pid}")
        for p in self.places.values():
            if p.building is not None and p.building not in self.buildings:
                raise WorldError(f"place {p.id} references unknown building {p.building}")

    @classmethod
    def load(cls, path: str | Path) -> "WorldMap":
        return cls(SceneBundle.from_json(Path(path).read_text()))

    # -- indices

    def _candidates_box(self, x0, y0, x1, y1) -> list[int]:
        out = set()
        for cx in range(_cell(x0), _cell(x1) + 1):
            for cy in range(_cell(y0), _cell(y1) + 1):
                out.update(self._grid.get((cx, cy), ()))
        return sorted(out)

    def buildings_near(self, p: Sequence[float], radius: float) -> list[int]:
        ks = self._candidates_box(p[0] - radius, p[1] - radius, p[0] + radius, p[1] + radius)
        return [self._ids[k] for k in ks]

    # -- terrain

    def elevation_at(self, p: Sequence[float]) -> float:
        return elevation_at(self, p)

    # -- containment / visibility

    def building_at(self, p: Sequence[float]) -> int | None:
        """Building whose footprint interior contains ``p`` (edges count as outside)."""
        for k in self._candidates_box(p[0], p[1], p[0], p[1]):
            if shapely.contains_xy(self._polys[k], p[0], p[1]):
                return self._ids[k]
        return None

    def clearance(self, p: Sequence[float], radius: float) -> float:
        """Distance from ``p`` to the nearest footprint within ``radius`` (0 inside, inf if none)."""
        best = math.inf
        pt = shapely.points(p[0], p[1])
        for k in self._candidates_box(p[0] - radius, p[1] - radius, p[0] + radius, p[1] + radius):
            best = min(best, float(shapely.distance(self._polys[k], pt)))
        return best

    def line_of_sight(self, a: Sequence[float], b: Sequence[float]) -> bool:
        return line_of_sight(self, a, b)

    def cast_rays(self, origin: Sequence[float], angles: np.ndarray, max_range: float) -> np.ndarray:
        ks = self._candidates_box(origin[0] - max_range, origin[1] - max_range, origin[0] + max_range, origin[1] + max_range)
        if not ks:
            return np.full(len(angles), np.inf)
        edges = np.concatenate([self._edges[k] for k in ks])
        return ray_hits(origin, np.asarray(angles, dtype=float), edges, max_range)

    # -- transit

    def stop_point(self, place_id: int) -> Point:
        line_id, i = self.stop_index[place_id][0]
        return self.bus_lines[line_id].stop_points[i]

    def nearest_stop(self, p: Sequence[float]) -> tuple[int, float]:
        return nearest_stop(self, p)

    def nearest_station(self, p: Sequence[float]) -> tuple[int, float]:
        return nearest_station(self, p)

    def road_path_length(self, a: Sequence[float], b: Sequence[float]) -> float:
        return road_path_length(self, a, b)

    def access_point(self, place_id: int, offset: float = 0.8) -> Point:
        """A point just outside the place's door, clear of its footprint."""
        place = self.places[place_id]
        if place.building is None:
            return place.door
        fp = self.buildings[place.building].footprint
        door = place.door
        n = len(fp)
        best = None
        for i in range(n):
            a, b = fp[i], fp[(i + 1) % n]
            q, _ = closest_point_on_segment(door, a, b)
            d = dist(q, door)
            if best is None or d < best[0]:
                best = (d, a, b)
        _, a, b = best
        ex, ey = b[0] - a[0], b[1] - a[1]
        L = math.hypot(ex, ey)
        nx, ny = ey / L, -ex / L  # right-hand normal; outward for CCW rings
        out = (door[0] + nx * offset, door[1] + ny * offset)
        if self.building_at(out) is not None:
            out = (door[0] - nx * offset, door[1] - ny * offset)
        return out

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self.bundle.heightfield.bounds


def _cell(v: float) -> int:
    return int(math.floor(v / GRID_CELL))


def elevation_at(world: WorldMap, p: Sequence[float]) -> float:
    """Bilinear interpolation of the four grid nodes around ``p``."""
    hf = world.bundle.heightfield if isinstance(world, WorldMap) else world
    x0, y0, x1, y1 = hf.bounds
    x, y = float(p[0]), float(p[1])
    eps = 1e-9 * max(1.0, abs(x1 - x0), abs(y1 - y0))
    if not (x0 - eps <= x <= x1 + eps and y0 - eps <= y <= y1 + eps):
        raise WorldError(f"point ({x:.3f}, {y:.3f}) outside heightfield bounds")
    u = min(max((x - x0) / hf.cell_size, 0.0), hf.cols - 1)
    v = min(max((y - y0) / hf.cell_size, 0.0), hf.rows - 1)
    c = min(int(math.floor(u)), hf.cols - 2)
    r = min(int(math.floor(v)), hf.rows - 2)
    fu, fv = u - c, v - r
    e = hf.elevations
    z00, z10 = e[r, c], e[r, c + 1]
    z01, z11 = e[r + 1, c], e[r + 1, c + 1]
    return float((z00 * (1 - fu) + z10 * fu) * (1 - fv) + (z01 * (1 - fu) + z11 * fu) * fv)


def line_of_sight(world: WorldMap, a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff segment ``a``-``b`` misses every footprint interior."""
    ks = world._candidates_box(min(a[0], b[0]), min(a[1], b[1]), max(a[0], b[0]), max(a[1], b[1]))
    if not ks:
        return True
    if a[0] == b[0] and a[1] == b[1]:
        return world.building_at(a) is None
    seg = LineString([tuple(a), tuple(b)])
    for k in ks:
        poly = world._polys[k]
        if poly.intersects(seg) and poly.relate_pattern(seg, "T********"):
            return False
    return True


def nearest_stop(world: WorldMap, p: Sequence[float]) -> tuple[int, float]:
    best = None
    for pid in sorted(world.stop_index):
        d = dist(p, world.stop_point(pid))
        if best is None or d < best[1]:
            best = (pid, d)
    if best is None:
        raise WorldError("scene has no bus stops")
    return best


def nearest_station(world: WorldMap, p: Sequence[float]) -> tuple[int, float]:
    best = None
    for sid in sorted(world.stations):
        d = dist(p, world.stations[sid].location)
        if best is None or d < best[1]:
            best = (sid, d)
    if best is None:
        raise WorldError("scene has no bike stations")
    return best


def road_path_length(world: WorldMap, a: Sequence[float], b: Sequence[float]) -> float:
    try:
        return world.roads.path_length(a, b)
    except RoutingError as exc:
        raise WorldError(str(exc)) from None
