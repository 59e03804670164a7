"""Background vehicles and pedestrians on the lane-annotated road graph.

Four rules are enforced: exclusive junction access, preferring the outgoing
road with fewer vehicles, pedestrians sidestepping each other, and lane
changes out of congested lanes. Everything runs on (segment, lane,
direction) coordinates; world positions are only derived for pedestrians and
for census dumps.

A junction's zone is the stretch of every incident segment within
``junction_radius`` metres (along the lane) of the junction node. An entity
must hold the junction's gate while inside its zone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import point_at_arc
from .worldmodel import WorldMap

VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"


@dataclass
class TrafficConfig:
    vehicle_speed: float = 8.0
    pedestrian_speed: float = 1.4
    safety_gap: float = 4.0
    pedestrian_gap: float = 1.0
    junction_radius: float = 8.0
    congestion: float = 0.04  # vehicles per metre of lane
    proximity: float = 1.0
    sidestep: float = 0.3
    lane_change_share: float = 0.5

    def gap(self, kind: str) -> float:
        return self.safety_gap if kind == VEHICLE else self.pedestrian_gap

    def speed(self, kind: str) -> float:
        return self.vehicle_speed if kind == VEHICLE else self.pedestrian_speed


@dataclass
class TrafficEntity:
    id: str
    kind: str
    segment: int
    lane: int  # lane index for vehicles, sidewalk side (0 right, 1 left of the segment) for pedestrians
    direction: int  # +1 along the centerline, -1 against it
    arc: float  # metres travelled along the lane in its direction
    speed: float
    route: list[int] = field(default_factory=list)
    lateral: float = 0.0
    may_change: bool = False

    @property
    def lane_key(self) -> tuple:
        return (self.kind, self.segment, self.lane, self.direction)


@dataclass
class JunctionGate:
    junction: int
    occupant: str | None = None
    waiting: list[str] = field(default_factory=list)  # FIFO of entities held at the zone boundary


def request_junction(gate: JunctionGate, entity_id: str) -> bool:
    if gate.occupant is None or gate.occupant == entity_id:
        gate.occupant = entity_id
        return True
    return False


@dataclass
class TrafficState:
    config: TrafficConfig
    entities: dict[str, TrafficEntity] = field(default_factory=dict)
    gates: dict[int, JunctionGate] = field(default_factory=dict)
    tick: int = 0
    _index: dict | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "entities": {k: asdict(e) for k, e in self.entities.items()},
            "gates": {str(k): [g.occupant, list(g.waiting)] for k, g in self.gates.items()},
            "tick": self.tick,
        }

    @classmethod
    def from_dict(cls, d) -> "TrafficState":
        return cls(
            TrafficConfig(**d["config"]),
            {k: TrafficEntity(**e) for k, e in d["entities"].items()},
            {int(k): JunctionGate(int(k), v[0], list(v[1])) for k, v in d["gates"].items()},
            d["tick"],
        )

    def lane_members(self) -> dict[tuple, list[TrafficEntity]]:
        if self._index is None:
            out: dict[tuple, list[TrafficEntity]] = {}
            for k in sorted(self.entities):
                e = self.entities[k]
                out.setdefault(e.lane_key, []).append(e)
            self._index = out
        return self._index

    def relocate(self, e: TrafficEntity, seg: int, lane: int, direction: int) -> None:
        idx = self.lane_members()
        idx[e.lane_key].remove(e)
        e.segment, e.lane, e.direction = seg, lane, direction
        idx.setdefault(e.lane_key, []).append(e)


class _Geom:
    """Per-world cached lengths, lane counts and node incidence."""

    def __init__(self, world: WorldMap):
        segs = world.bundle.roads
        self.seg = {s.id: s for s in segs}
        self.length = {s.id: s.length for s in segs}
        self.junctions = {j.id: j for j in world.bundle.junctions}
        self.incident: dict[int, list[int]] = {}
        for s in segs:
            self.incident.setdefault(s.start_node, []).append(s.id)
            if s.end_node != s.start_node:
                self.incident.setdefault(s.end_node, []).append(s.id)

    def lanes(self, seg_id: int, kind: str) -> int:
        if kind == PEDESTRIAN:
            return 2
        s = self.seg[seg_id]
        return max(1, s.lane_count if s.one_way else s.lane_count // 2)

    def entry_node(self, seg_id: int, direction: int) -> int:
        s = self.seg[seg_id]
        return s.start_node if direction > 0 else s.end_node

    def exit_node(self, seg_id: int, direction: int) -> int:
        s = self.seg[seg_id]
        return s.end_node if direction > 0 else s.start_node


def _geom(world: WorldMap) -> _Geom:
    g = getattr(world, "_traffic_geom", None)
    if g is None:
        g = _Geom(world)
        world._traffic_geom = g
    return g


def zones(world: WorldMap, cfg: TrafficConfig, e: TrafficEntity) -> set[int]:
    """Junctions whose zone contains the entity."""
    g = _geom(world)
    L = g.length[e.segment]
    out = set()
    if e.arc < cfg.junction_radius:
        n = g.entry_node(e.segment, e.direction)
        if n in g.junctions:
            out.add(n)
    if L - e.arc < cfg.junction_radius:
        n = g.exit_node(e.segment, e.direction)
        if n in g.junctions:
            out.add(n)
    return out


def entity_pose(world: WorldMap, e: TrafficEntity) -> tuple[tuple[float, float], float]:
    """World position (with lane/sidewalk offset) and travel heading."""
    g = _geom(world)
    s = g.seg[e.segment]
    L = g.length[e.segment]
    fwd = e.arc if e.direction > 0 else L - e.arc
    (x, y), h = point_at_arc(s.centerline, fwd)
    travel = h if e.direction > 0 else h + math.pi
    if e.kind == VEHICLE:
        k = g.lanes(e.segment, VEHICLE)
        lw = s.width / max(1, s.lane_count)
        off = (e.lane - (k - 1) / 2) * lw if s.one_way else (e.lane + 0.5) * lw
        rh = travel
    else:
        off = s.width / 2 + 0.5
        rh = h if e.lane == 0 else h + math.pi
    x += off * math.sin(rh)
    y -= off * math.cos(rh)
    if e.lateral:
        x += e.lateral * math.sin(travel)
        y -= e.lateral * math.cos(travel)
    return (x, y), travel


# --------------------------------------------------------------------------
# rules


def lane_count_on(traffic: TrafficState, kind: str, seg: int, direction: int, lane: int | None = None) -> int:
    idx = traffic.lane_members()
    if lane is not None:
        return len(idx.get((kind, seg, lane, direction), ()))
    return sum(len(idx.get((kind, seg, k, direction), ())) for k in range(16))


def choose_direction(world: WorldMap, traffic: TrafficState, entity: TrafficEntity, junction: int) -> tuple[int, int, int]:
    """Outgoing (segment, lane, direction) with the fewest same-kind entities; ties to the lowest segment id."""
    g = _geom(world)
    options = []
    for sid in sorted(set(g.incident.get(junction, []))):
        if sid == entity.segment:
            continue
        s = g.seg[sid]
        for d in (1, -1):
            if g.entry_node(sid, d) != junction:
                continue
            if entity.kind == VEHICLE and s.one_way and d < 0:
                continue
            options.append((lane_count_on(traffic, entity.kind, sid, d), sid, d))
    if not options:
        sid, d = entity.segment, -entity.direction  # dead end: U-turn
    else:
        _, sid, d = min(options)
    lanes = g.lanes(sid, entity.kind)
    counts = [(lane_count_on(traffic, entity.kind, sid, d, k), k) for k in range(lanes)]
    return sid, min(counts)[1], d


def pedestrian_adjust(p1, h1: float, p2, h2: float, threshold: float = 1.0, offset: float = 0.3):
    """Lateral sidestep vectors for two close pedestrians.

    Each steps ``offset`` to the right of its own heading, or to the left when
    the other pedestrian is on its right. Neither step reduces separation.
    """
    if math.dist(p1, p2) >= threshold:
        return (0.0, 0.0), (0.0, 0.0)
    return _sidestep(p1, h1, p2, offset), _sidestep(p2, h2, p1, offset)


def _side_sign(p, h, other) -> float:
    rx, ry = math.sin(h), -math.cos(h)
    return 1.0 if rx * (p[0] - other[0]) + ry * (p[1] - other[1]) >= 0 else -1.0


def _sidestep(p, h, other, offset):
    s = _side_sign(p, h, other) * offset
    return (s * math.sin(h), -s * math.cos(h))


def _lane_density(traffic: TrafficState, world: WorldMap, seg: int, lane: int, direction: int) -> float:
    return lane_count_on(traffic, VEHICLE, seg, direction, lane) / max(_geom(world).length[seg], 1e-9)


def _gap_clear(traffic: TrafficState, key: tuple, arc: float, gap: float, exclude: str) -> bool:
    for e in traffic.lane_members().get(key, ()):
        if e.id != exclude and abs(e.arc - arc) < gap:
            return False
    return True


def maybe_lane_change(traffic: TrafficState, vehicle: TrafficEntity, world: WorldMap) -> int:
    """Switch to an adjacent lane when the current one is congested and the neighbour is strictly emptier."""
    cfg = traffic.config
    lanes = _geom(world).lanes(vehicle.segment, VEHICLE)
    if vehicle.kind != VEHICLE or lanes < 2:
        return vehicle.lane
    here = _lane_density(traffic, world, vehicle.segment, vehicle.lane, vehicle.direction)
    if here <= cfg.congestion:
        return vehicle.lane
    best = None
    for k in (vehicle.lane - 1, vehicle.lane + 1):
        if not 0 <= k < lanes:
            continue
        dens = _lane_density(traffic, world, vehicle.segment, k, vehicle.direction)
        if dens < here and _gap_clear(traffic, (VEHICLE, vehicle.segment, k, vehicle.direction), vehicle.arc, cfg.safety_gap, vehicle.id):
            if best is None or dens < best[0]:
                best = (dens, k)
    if best is not None:
        traffic.relocate(vehicle, vehicle.segment, best[1], vehicle.direction)
    return vehicle.lane


# --------------------------------------------------------------------------
# spawning / stepping


def spawn_traffic(
    world: WorldMap,
    n_vehicles: int,
    n_pedestrians: int,
    seed: int,
    config: TrafficConfig | None = None,
) -> TrafficState:
    """Random placement outside junction zones, respecting lane gaps."""
    cfg = config or TrafficConfig()
    g = _geom(world)
    rng = np.random.default_rng([int(seed), 0x7AFF])
    traffic = TrafficState(cfg, gates={j: JunctionGate(j) for j in sorted(g.junctions)})
    segs = sorted(sid for sid, L in g.length.items() if L > 2 * cfg.junction_radius + 1.0)
    if not segs and (n_vehicles or n_pedestrians):
        raise ValueError("no road segment long enough for traffic")
    for kind, count in ((VEHICLE, n_vehicles), (PEDESTRIAN, n_pedestrians)):
        for i in range(count):
            for _ in range(200):
                sid = segs[int(rng.integers(len(segs)))]
                s = g.seg[sid]
                d = 1 if (kind == VEHICLE and s.one_way) else int(rng.choice([1, -1]))
                lane = int(rng.integers(g.lanes(sid, kind)))
                L = g.length[sid]
                arc = float(rng.uniform(cfg.junction_radius, L - cfg.junction_radius))
                if _gap_clear(traffic, (kind, sid, lane, d), arc, cfg.gap(kind), ""):
                    eid = f"{kind[0]}{i}"
                    traffic.entities[eid] = TrafficEntity(
                        eid, kind, sid, lane, d, arc, cfg.speed(kind),
                        may_change=bool(kind == VEHICLE and rng.random() < cfg.lane_change_share),
                    )
                    traffic._index = None
                    break
            else:
                raise ValueError(f"could not place {kind} {i}")
    return traffic


def _leader_arc(traffic: TrafficState, e: TrafficEntity, members) -> float | None:
    best = None
    for o in members.get(e.lane_key, ()):
        if o.id != e.id and o.arc >= e.arc and (best is None or o.arc < best):
            best = o.arc
    return best


def _tail_arc(members, key, exclude) -> float | None:
    arcs = [o.arc for o in members.get(key, ()) if o.id != exclude]
    return min(arcs) if arcs else None


def _move_entity(world: WorldMap, traffic: TrafficState, e: TrafficEntity, dt: float) -> None:
    cfg = traffic.config
    g = _geom(world)
    gap = cfg.gap(e.kind)
    members = traffic.lane_members()
    L = g.length[e.segment]
    adv = e.speed * dt
    lead = _leader_arc(traffic, e, members)
    if lead is not None:
        adv = min(adv, max(0.0, lead - gap - e.arc))
    end_node = g.exit_node(e.segment, e.direction)
    boundary = L - cfg.junction_radius
    if end_node in g.junctions and e.arc + adv > boundary:
        if not _enter_fairly(traffic.gates[end_node], e.id):
            adv = max(0.0, min(adv, boundary - e.arc))
    target = e.arc + adv
    if target < L:
        e.arc = target
        return
    # reaching the end of the segment: hand over to the next lane
    if e.route:
        sid = e.route.pop(0)
        d = 1 if g.entry_node(sid, 1) == end_node else -1
        nxt = (sid, min((lane_count_on(traffic, e.kind, sid, d, k), k) for k in range(g.lanes(sid, e.kind)))[1], d)
    else:
        nxt = choose_direction(world, traffic, e, end_node)
    key = (e.kind, nxt[0], nxt[1], nxt[2])
    tail = _tail_arc(members, key, e.id)
    over = target - L
    if tail is not None:
        over = min(over, tail - gap)
    if over < 0:
        e.arc = L
        return
    traffic.relocate(e, *nxt)
    e.arc = min(over, g.length[e.segment])


def _enter_fairly(gate: JunctionGate, eid: str) -> bool:
    """request_junction with first-come-first-served ordering among waiters."""
    if gate.occupant != eid and gate.waiting and gate.waiting[0] != eid:
        if eid not in gate.waiting:
            gate.waiting.append(eid)
        return False
    if request_junction(gate, eid):
        if gate.waiting and gate.waiting[0] == eid:
            gate.waiting.pop(0)
        return True
    if eid not in gate.waiting:
        gate.waiting.append(eid)
    return False


def _sync_gates(world: WorldMap, traffic: TrafficState, e: TrafficEntity) -> None:
    inside = zones(world, traffic.config, e)
    for j in inside:
        gate = traffic.gates[j]
        if gate.occupant != e.id:
            # only reachable through a held junction; keep the invariant loud
            raise AssertionError(f"{e.id} inside junction {j} without holding it")
    for j, gate in traffic.gates.items():
        if gate.occupant == e.id and j not in inside:
            gate.occupant = None


def _held_gates(traffic: TrafficState) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for j, g in traffic.gates.items():
        if g.occupant is not None:
            out.setdefault(g.occupant, []).append(j)
    return out


def spawn_and_step_traffic(world: WorldMap, traffic: TrafficState, seed: int, dt: float) -> TrafficState:
    """Advance all traffic by ``dt`` seconds. Pure in (world, traffic, seed, dt) up to in-place update."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = np.random.default_rng([int(seed), int(traffic.tick), 0x7AFF])
    order = sorted(traffic.entities)
    # lane changes happen for a random subset each tick
    for eid in order:
        e = traffic.entities[eid]
        if e.kind == VEHICLE and e.may_change and rng.random() < 0.5:
            maybe_lane_change(traffic, e, world)
    for eid in order:
        e = traffic.entities[eid]
        _move_entity(world, traffic, e, dt)
        _sync_gates(world, traffic, e)
    _adjust_pedestrians(world, traffic)
    traffic.tick += 1
    return traffic


def _adjust_pedestrians(world: WorldMap, traffic: TrafficState) -> None:
    cfg = traffic.config
    peds = [traffic.entities[k] for k in sorted(traffic.entities) if traffic.entities[k].kind == PEDESTRIAN]
    for e in peds:
        e.lateral = 0.0
    poses = {e.id: entity_pose(world, e) for e in peds}
    for e in peds:
        p, h = poses[e.id]
        near = None
        for o in peds:
            if o.id == e.id:
                continue
            d = math.dist(p, poses[o.id][0])
            if d < cfg.proximity and (near is None or d < near[0]):
                near = (d, o.id)
        if near is not None:
            e.lateral = _side_sign(p, h, poses[near[1]][0]) * cfg.sidestep


# --------------------------------------------------------------------------
# checks / dumps


def junction_occupancy(world: WorldMap, traffic: TrafficState) -> dict[int, int]:
    counts: dict[int, int] = {}
    for e in traffic.entities.values():
        for j in zones(world, traffic.config, e):
            counts[j] = counts.get(j, 0) + 1
    return counts


def gap_violations(traffic: TrafficState) -> list[tuple[str, str]]:
    out = []
    for key, members in traffic.lane_members().items():
        gap = traffic.config.gap(key[0])
        arcs = sorted((e.arc, e.id) for e in members)
        for (a0, i0), (a1, i1) in zip(arcs, arcs[1:]):
            if a1 - a0 < gap - 1e-9:
                out.append((i0, i1))
    return out


def census(traffic: TrafficState) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for e in traffic.entities.values():
        row = out.setdefault(str(e.segment), {VEHICLE: 0, PEDESTRIAN: 0})
        row[e.kind] += 1
    return {k: out[k] for k in sorted(out, key=int)}


def census_json(traffic: TrafficState) -> str:
    return json.dumps(census(traffic), sort_keys=True)
