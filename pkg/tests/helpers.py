"""Hand-built miniature scenes for unit tests."""

from __future__ import annotations

import numpy as np

from commsim.geodata import BikeStation, Building, BusLine, Heightfield, Place, RoadSegment, SceneBundle
from commsim.geometry import polyline_length
from commsim.worldmodel import WorldMap


def flat(extent: float = 400.0, origin=(-100.0, -100.0), z: float = 0.0) -> Heightfield:
    return Heightfield(origin, extent, np.full((2, 2), z))


def box(bid: int, x0, y0, x1, y1, name: str = "") -> Building:
    return Building(bid, name or f"Box {bid}", [(x0, y0), (x1, y0), (x1, y1), (x0, y1)], 10.0, "yes")


def road(rid: int, pts, a: int, b: int, lanes: int = 2, one_way: bool = False) -> RoadSegment:
    return RoadSegment(rid, [tuple(map(float, p)) for p in pts], 6.0, lanes, one_way, a, b, "residential")


def loop_line(stop_ids, stop_points, speed: float = 10.0, dwell: float = 10.0) -> BusLine:
    """Closed straight-edged loop through the stop points."""
    route = [tuple(map(float, p)) for p in stop_points] + [tuple(map(float, stop_points[0]))]
    arcs = [polyline_length(route[: i + 1]) for i in range(len(stop_points))]
    offsets = [polyline_length(route[i : i + 2]) / speed for i in range(len(stop_points))]
    return BusLine(0, list(stop_ids), offsets, sum(offsets) + dwell * len(stop_ids), route, arcs,
                   [tuple(map(float, p)) for p in stop_points])


def tiny_world(roads=(), buildings=(), places=(), lines=(), stations=(), hf=None) -> WorldMap:
    return WorldMap(SceneBundle(list(roads), [], list(buildings), list(places), list(lines), list(stations), hf or flat()))


def street_world() -> WorldMap:
    """A 200 m east-west street with one building north of it, a two-stop bus line and two bike stations."""
    roads = [road(0, [(0, 0), (200, 0)], 1, 2)]
    buildings = [box(0, 40, 10, 60, 30, "Shop")]
    places = [
        Place(0, "Shop", "stores", 0, (50.0, 10.0)),
        Place(1, "West Stop", "open", None, (10.0, 0.0)),
        Place(2, "East Stop", "open", None, (190.0, 0.0)),
    ]
    lines = [loop_line([1, 2], [(10.0, 0.0), (190.0, 0.0)])]
    stations = [BikeStation(0, (20.0, -5.0), 10, 3), BikeStation(1, (180.0, -5.0), 10, 0)]
    return tiny_world(roads, buildings, places, lines, stations)


def micro_delivery(n_items: int = 3):
    """Deterministic delivery scene: items lie together on the pavement, the Shop takes them all."""
    from commsim.tasks.taskspec import TaskSpec

    world = street_world()
    spots = [(80.0 + 0.8 * i, -6.0) for i in range(n_items)]
    objects = [{"id": f"obj{i}", "kind": "box", "position": list(p)} for i, p in enumerate(spots)]
    subtasks = [{"type": "deliver", "obj": f"obj{i}", "source": {"point": list(p)}, "destination": 0, "bbox": []}
                for i, p in enumerate(spots)]
    task = TaskSpec("delivery", 0, scene="street", agents=[{"id": "a0", "pos": [100.0, -8.0], "heading": 3.14159, "cash": 10.0}],
                    objects=objects, subtasks=subtasks, step_limit=300)
    return world, task
