"""Procedural task generation for the assistant and commute families."""

from __future__ import annotations

import math
import warnings
import zlib
from typing import Callable, Sequence

import numpy as np

from ..geometry import dist
from ..simcore import ROOM_CONTAINERS
from .schedule import DAY_END, format_time, validate_schedule
from .taskspec import HUMAN, MAIN_AGENT, TaskSpec

OBJECT_TYPES = ("backpack", "box", "umbrella", "bottle", "book", "laptop bag", "grocery bag", "package", "toolkit")
MAX_DRAWS = 10_000
MIN_TARGET_DIST = 100.0
OUTDOOR_CLEARANCE = 1.0
SEARCH_BOX = 60.0
START_CASH = 100.0

COMMUTE_TARGET_M = 2500.0
COMMUTE_ORDERS = 300
WALK_SPEED = 2.0

Selector = Callable[[np.random.Generator, list, str], object]


class GenerationError(RuntimeError):
    pass


def uniform_selector(rng: np.random.Generator, candidates: list, role: str):
    return candidates[int(rng.integers(len(candidates)))]


def _rng(seed: int, kind: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(kind.encode())])


def sample_outdoor_point(world, rng: np.random.Generator, near=None, radius: float | None = None, clearance: float = OUTDOOR_CLEARANCE,
                         max_draws: int = MAX_DRAWS):
    """Rejection-sample a point outside every footprint (with ``clearance`` margin), optionally within ``radius`` of ``near``."""
    x0, y0, x1, y1 = world.bounds
    m = 20.0
    for _ in range(max_draws):
        if near is None:
            p = (float(rng.uniform(x0 + m, x1 - m)), float(rng.uniform(y0 + m, y1 - m)))
        else:
            r = radius * math.sqrt(float(rng.uniform()))
            a = float(rng.uniform(0, 2 * math.pi))
            p = (near[0] + r * math.cos(a), near[1] + r * math.sin(a))
            if not (x0 + m <= p[0] <= x1 - m and y0 + m <= p[1] <= y1 - m):
                continue
        if world.building_at(p) is None and world.clearance(p, clearance + 1.0) >= clearance:
            return p
    raise GenerationError(f"no unoccluded point after {max_draws} draws")


def indoor_places(world) -> list:
    return [p for p in sorted(world.places.values(), key=lambda p: p.id) if p.building is not None]


def _bbox_of_building(world, bid) -> list[float]:
    fp = world.buildings[bid].footprint
    xs, ys = [q[0] for q in fp], [q[1] for q in fp]
    return [min(xs), min(ys), max(xs), max(ys)]


def _point_bbox(p, half: float = 0.25) -> list[float]:
    return [p[0] - half, p[1] - half, p[0] + half, p[1] + half]


def _far_from(world, places: list, start, d: float) -> list:
    return [p for p in places if dist(world.access_point(p.id), start) > d]


def generate_assistant_task(world, seed: int, kind: str, selector: Selector | None = None, n_items: int = 3,
                            step_limit: int = 1500) -> TaskSpec:
    """A carry, delivery or search episode; a pure function of (world, seed, kind, selector)."""
    if kind not in ("carry", "delivery", "search"):
        raise ValueError(f"not an assistant task kind: {kind!r}")
    rng = _rng(seed, kind)
    select = selector or uniform_selector
    rooms = indoor_places(world)
    if len(rooms) < 3:
        raise GenerationError("scene needs at least three indoor places")
    start = sample_outdoor_point(world, rng)
    agent = {"id": MAIN_AGENT, "pos": list(start), "heading": float(rng.uniform(-math.pi, math.pi)), "cash": START_CASH}
    task = TaskSpec(kind, int(seed), agents=[agent], step_limit=step_limit)
    if kind == "delivery":
        _delivery(world, rng, select, task, start, n_items, rooms)
    elif kind == "search":
        _search(world, rng, select, task, start, rooms)
    else:
        _carry(world, rng, select, task, start, rooms)
    task.check(world)
    return task


def _delivery(world, rng, select, task, start, n_items, rooms):
    far = _far_from(world, rooms, start, MIN_TARGET_DIST) or rooms
    for i in range(n_items):
        oid = f"obj{i}"
        kind = OBJECT_TYPES[int(rng.integers(len(OBJECT_TYPES)))]
        if rng.uniform() < 0.5:
            src = select(rng, far, "source")
            container = ROOM_CONTAINERS[int(rng.integers(len(ROOM_CONTAINERS)))]
            task.objects.append({"id": oid, "kind": kind, "place": src.id, "container": container})
            source = {"place": src.id}
            bbox = _bbox_of_building(world, src.building)
        else:
            for _ in range(MAX_DRAWS):
                p = sample_outdoor_point(world, rng)
                if dist(p, start) > MIN_TARGET_DIST:
                    break
            else:
                raise GenerationError("no outdoor source far enough from the start")
            task.objects.append({"id": oid, "kind": kind, "position": list(p)})
            source = {"point": list(p)}
            bbox = _point_bbox(p)
            src = None
        dests = [p for p in rooms if src is None or p.id != src.id]
        dest = select(rng, dests, "destination")
        task.subtasks.append({"type": "deliver", "obj": oid, "source": source, "destination": dest.id, "bbox": bbox,
                              "destination_bbox": _bbox_of_building(world, dest.building)})


def _search(world, rng, select, task, start, rooms):
    oid = "obj0"
    kind = OBJECT_TYPES[int(rng.integers(len(OBJECT_TYPES)))]
    if rng.uniform() < 0.5:
        far = _far_from(world, rooms, start, MIN_TARGET_DIST) or rooms
        room = select(rng, far, "search_room")
        container = ROOM_CONTAINERS[int(rng.integers(len(ROOM_CONTAINERS)))]
        task.objects.append({"id": oid, "kind": kind, "place": room.id, "container": container})
        task.subtasks.append({"type": "search", "obj": oid, "region": {"place": room.id}, "bbox": _bbox_of_building(world, room.building)})
        return
    for _ in range(MAX_DRAWS):
        p = sample_outdoor_point(world, rng)
        if dist(p, start) > MIN_TARGET_DIST + SEARCH_BOX:
            break
    else:
        raise GenerationError("no outdoor search target far enough from the start")
    ox, oy = rng.uniform(0.1, 0.9, size=2) * SEARCH_BOX
    box = [p[0] - ox, p[1] - oy, p[0] - ox + SEARCH_BOX, p[1] - oy + SEARCH_BOX]
    task.objects.append({"id": oid, "kind": kind, "position": list(p)})
    task.subtasks.append({"type": "search", "obj": oid, "region": {"box": [float(v) for v in box]}, "bbox": _point_bbox(p)})


def _carry(world, rng, select, task, start, rooms):
    homes = [p for p in rooms if p.category == "accommodation"] or rooms
    for _ in range(100):
        origin = select(rng, _far_from(world, rooms, start, MIN_TARGET_DIST) or rooms, "human_start")
        o_pt = world.access_point(origin.id)
        cands = [h for h in homes if h.id != origin.id and 100.0 <= dist(world.access_point(h.id), o_pt) <= 400.0]
        if cands and dist(o_pt, start) <= 300.0:
            break
    else:
        cands = [h for h in homes if h.id != origin.id]
    home = select(rng, cands, "home")
    task.human = {"id": HUMAN, "home": home.id, "start_place": origin.id, "delay": 900}
    task.agents.append({"id": HUMAN, "pos": list(o_pt), "heading": 0.0, "cash": 0.0})
    for i in range(2):
        oid = f"obj{i}"
        kind = OBJECT_TYPES[int(rng.integers(len(OBJECT_TYPES)))]
        p = sample_outdoor_point(world, rng, near=o_pt, radius=3.0, clearance=0.8)
        task.objects.append({"id": oid, "kind": kind, "position": list(p)})
        task.subtasks.append({"type": "carry", "obj": oid, "human": HUMAN, "destination": home.id, "bbox": _point_bbox(p),
                              "destination_bbox": _bbox_of_building(world, home.building)})


# --------------------------------------------------------------------------
# commute


class _PairLengths:
    def __init__(self, world):
        self.world = world
        self.cache: dict[tuple[int, int], float] = {}

    def __call__(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key not in self.cache:
            w = self.world
            try:
                self.cache[key] = w.road_path_length(w.access_point(a), w.access_point(b))
            except Exception:
                self.cache[key] = math.inf
        return self.cache[key]

    @classmethod
    def of(cls, world) -> "_PairLengths":
        # the world is immutable, so one cache per world is safe
        cached = getattr(world, "_pair_lengths", None)
        if cached is None:
            cached = cls(world)
            world._pair_lengths = cached
        return cached


def route_length(world, route: Sequence[int], lengths=None) -> float:
    f = lengths or _PairLengths.of(world)
    return sum(f(route[i], route[i + 1]) for i in range(len(route) - 1))


def _activity_text(place) -> tuple[str, str]:
    if place.category == "food":
        return "meal", f"have a meal at {place.name}"
    return "main", f"spend time at {place.name}"


def generate_commute_episode(world, seed: int, target_m: float = COMMUTE_TARGET_M, step_limit: int = 1500) -> TaskSpec:
    """A one-day schedule visiting 4 to 8 distinct places (home included), routed close to ``target_m`` metres."""
    if len(world.places) < 8:
        raise GenerationError("scene needs at least eight places")
    rng = _rng(seed, "commute")
    lengths = _PairLengths.of(world)
    homes = [p for p in indoor_places(world) if p.category == "accommodation"] or indoor_places(world)
    home = homes[int(rng.integers(len(homes)))]
    others = [p for p in sorted(world.places.values(), key=lambda p: p.id) if p.id != home.id]
    k = int(rng.integers(4, 9))
    best = None
    for _ in range(COMMUTE_ORDERS):
        pick = rng.choice(len(others), size=k - 1, replace=False)
        route = [home.id] + [others[int(i)].id for i in pick] + [home.id]
        L = route_length(world, route, lengths)
        if best is None or abs(L - target_m) < abs(best[0] - target_m):
            best = (L, route)
    L, route = best
    if not math.isfinite(L) or abs(L - target_m) > 0.2 * target_m:
        warnings.warn(f"commute route length {L:.0f} m misses target {target_m:.0f} m", stacklevel=2)

    def entry(typ, text, place, t0, t1):
        bname = None
        if place is not None and place.building is not None:
            bname = world.buildings[place.building].name or None
        return {"type": typ, "activity": text, "place": place.name if place else None, "building": bname,
                "start_time": format_time(t0), "end_time": format_time(t1)}

    t = int(rng.integers(7 * 3600, 8 * 3600 + 1800)) // 60 * 60
    schedule = [entry("sleep", "sleep at home", home, 0, t - 1)]
    commutes = []
    for i in range(len(route) - 1):
        a, b = world.places[route[i]], world.places[route[i + 1]]
        leg = lengths(a.id, b.id)
        window = int(math.ceil(1.5 * leg / WALK_SPEED)) + 60
        window = (window + 59) // 60 * 60
        schedule.append(entry("commute", f"commute to {b.name}", None, t, t + window - 1))
        commutes.append({"origin": a.id, "destination": b.id, "depart": t, "deadline": t + window})
        t += window
        if i == len(route) - 2:
            schedule.append(entry("sleep", "go to bed at home", b, t, DAY_END))
        else:
            typ, text = _activity_text(b)
            dur = int(rng.integers(30, 91)) * 60
            schedule.append(entry(typ, text, b, t, t + dur - 1))
            t += dur
    if t > DAY_END:
        raise GenerationError("schedule does not fit in one day")
    problems = validate_schedule(schedule, world)
    if problems:
        raise GenerationError("generated schedule is invalid: " + "; ".join(map(str, problems)))
    agent = {"id": MAIN_AGENT, "pos": list(world.places[home.id].door), "heading": 0.0, "cash": START_CASH, "place": home.id}
    return TaskSpec(
        "commute",
        int(seed),
        agents=[agent],
        subtasks=[{"type": "commute", "index": i} for i in range(len(commutes))],
        schedule=schedule,
        commutes=commutes,
        step_limit=step_limit,
    )


def commute_places(task: TaskSpec) -> int:
    """Distinct places the schedule visits."""
    return len({c["origin"] for c in task.commutes} | {c["destination"] for c in task.commutes})
