"""Deterministic world stepper.

One call to :func:`step` is one decision tick (one simulated second). Motion
is integrated in ``substeps`` straight-line increments with collision checks
against building footprints and other agents' discs. Buses run their loop,
bike stations keep inventory, messages are broadcast within a radius, and an
observation is synthesised for every agent after the tick.

``step`` mutates the given :class:`WorldState` in place and returns it.
Snapshots go through :meth:`WorldState.to_dict` / :meth:`WorldState.from_dict`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping

import numpy as np

from .geometry import dist, point_at_arc, wrap_angle
from .worldmodel import WorldMap

WALKING = "walking"
RIDING = "riding_bike"
ON_BUS = "on_bus"
INSIDE = "inside_place"
MODES = (WALKING, RIDING, ON_BUS, INSIDE)

ROOM_CONTAINERS = ("floor", "sofa", "table", "chair", "desk", "bed")
STATE_SCHEMA = "commsim.state/1"


class SimError(RuntimeError):
    pass


@dataclass
class SimConfig:
    walk_speed: float = 2.0
    bike_speed: float = 5.0
    bus_speed: float = 10.0
    bus_fare: float = 2.0
    bike_rate: float = 0.5  # per started minute
    dwell_time: float = 10.0
    buses_per_line: int = 1
    sense_range: float = 30.0
    fov: float = math.radians(120.0)
    agent_radius: float = 0.3
    reach: float = 1.5
    interact_radius: float = 5.0
    comm_radius: float = 50.0
    substeps: int = 10
    n_rays: int = 64
    max_text: int = 4096

    def check(self) -> None:
        for f in ("walk_speed", "bike_speed", "bus_speed", "sense_range", "agent_radius", "reach", "interact_radius"):
            if not getattr(self, f) > 0:
                raise ValueError(f"config {f} must be positive")
        for f in ("bus_fare", "bike_rate", "dwell_time", "comm_radius"):
            if getattr(self, f) < 0:
                raise ValueError(f"config {f} must be non-negative")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("config fov must be in (0, 2pi]")
        if self.substeps < 1 or self.buses_per_line < 1 or self.n_rays < 0:
            raise ValueError("config substeps/buses_per_line must be >= 1 and n_rays >= 0")

    @classmethod
    def from_overrides(cls, overrides: Mapping[str, Any] | None = None) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        overrides = dict(overrides or {})
        unknown = set(overrides) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**overrides)
        cfg.check()
        return cfg


# --------------------------------------------------------------------------
# actions

ACTION_KINDS = (
    "move_forward",
    "turn",
    "enter_bus",
    "exit_bus",
    "enter_bike",
    "exit_bike",
    "enter_place",
    "exit_place",
    "pick",
    "put",
    "communicate",
    "task_complete",
    "wait",
)
_ACTION_FIELDS = ("distance", "angle", "line", "station", "place", "obj", "arm", "point", "container", "text", "subtask", "reason")


@dataclass(frozen=True)
class Action:
    kind: str
    distance: float | None = None
    angle: float | None = None
    line: int | None = None
    station: int | None = None
    place: int | None = None
    obj: str | None = None
    arm: int | None = None
    point: tuple[float, float] | None = None
    container: str | None = None
    text: str | None = None
    subtask: int | None = None
    reason: str | None = None

    @classmethod
    def move_forward(cls, distance: float) -> "Action":
        return cls("move_forward", distance=float(distance))

    @classmethod
    def turn(cls, angle: float) -> "Action":
        return cls("turn", angle=float(angle))

    @classmethod
    def enter_bus(cls, line: int) -> "Action":
        return cls("enter_bus", line=line)

    @classmethod
    def exit_bus(cls) -> "Action":
        return cls("exit_bus")

    @classmethod
    def enter_bike(cls, station: int) -> "Action":
        return cls("enter_bike", station=station)

    @classmethod
    def exit_bike(cls, station: int | None = None) -> "Action":
        return cls("exit_bike", station=station)

    @classmethod
    def enter_place(cls, place: int) -> "Action":
        return cls("enter_place", place=place)

    @classmethod
    def exit_place(cls) -> "Action":
        return cls("exit_place")

    @classmethod
    def pick(cls, obj: str, arm: int | None = None) -> "Action":
        return cls("pick", obj=obj, arm=arm)

    @classmethod
    def put(cls, obj: str, point=None, container: str | None = None) -> "Action":
        return cls("put", obj=obj, point=None if point is None else (float(point[0]), float(point[1])), container=container)

    @classmethod
    def communicate(cls, text: str) -> "Action":
        return cls("communicate", text=text)

    @classmethod
    def task_complete(cls, subtask: int | None = None) -> "Action":
        return cls("task_complete", subtask=subtask)

    @classmethod
    def wait(cls, reason: str | None = None) -> "Action":
        return cls("wait", reason=reason)

    def validate(self, max_text: int = 4096) -> str | None:
        """Reason string when ill-formed, else ``None``."""
        k = self.kind
        if k not in ACTION_KINDS:
            return f"unknown action {k!r}"
        if k == "move_forward" and (self.distance is None or not math.isfinite(self.distance) or self.distance < 0):
            return "bad distance"
        if k == "turn" and (self.angle is None or not math.isfinite(self.angle)):
            return "bad angle"
        if k == "enter_bus" and self.line is None:
            return "missing line"
        if k == "enter_bike" and self.station is None:
            return "missing station"
        if k == "enter_place" and self.place is None:
            return "missing place"
        if k in ("pick", "put") and self.obj is None:
            return "missing object"
        if k == "pick" and self.arm not in (None, 0, 1):
            return "bad arm"
        if k == "communicate" and (self.text is None or len(self.text) > max_text):
            return "bad text"
        if self.point is not None and not all(math.isfinite(v) for v in self.point):
            return "bad point"
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for f in _ACTION_FIELDS:
            v = getattr(self, f)
            if v is not None:
                d[f] = list(v) if f == "point" else v
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Action":
        if not isinstance(d, Mapping) or "kind" not in d:
            raise ValueError("action must be an object with a 'kind'")
        extra = set(d) - set(_ACTION_FIELDS) - {"kind"}
        if extra:
            raise ValueError(f"unexpected action fields {sorted(extra)}")
        kw = {f: d[f] for f in _ACTION_FIELDS if f in d}
        if "point" in kw and kw["point"] is not None:
            kw["point"] = (float(kw["point"][0]), float(kw["point"][1]))
        return cls(kind=d["kind"], **kw)


@dataclass
class ActionStatus:
    kind: str = "idle"  # idle | ongoing | failed
    reason: str | None = None
    action: Action | None = None
    remaining: float = 0.0

    @classmethod
    def failed(cls, reason: str) -> "ActionStatus":
        return cls("failed", reason=reason)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.reason is not None:
            d["reason"] = self.reason
        if self.action is not None:
            d["action"] = self.action.to_dict()
            d["remaining"] = self.remaining
        return d

    @classmethod
    def from_dict(cls, d) -> "ActionStatus":
        return cls(d["kind"], d.get("reason"), Action.from_dict(d["action"]) if d.get("action") else None, d.get("remaining", 0.0))


# --------------------------------------------------------------------------
# state


@dataclass
class AgentState:
    id: str
    x: float
    y: float
    heading: float = 0.0
    mode: str = WALKING
    line: int | None = None  # bus line when on_bus
    bus: int | None = None  # bus index when on_bus
    place: int | None = None  # place when inside_place
    arms: list = field(default_factory=lambda: [None, None])
    cash: float = 0.0
    status: ActionStatus = field(default_factory=ActionStatus)
    schedule: list | None = None
    rental: dict | None = None  # {"station": id, "start": t}
    walked: float = 0.0
    ridden: float = 0.0
    fares_paid: float = 0.0
    bike_paid: float = 0.0

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def held_objects(self) -> list[str]:
        return [o for o in self.arms if o is not None]

    @property
    def outdoors(self) -> bool:
        return self.mode in (WALKING, RIDING)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "AgentState":
        d = dict(d)
        d["status"] = ActionStatus.from_dict(d["status"])
        return cls(**d)


@dataclass
class ObjectState:
    id: str
    kind: str
    position: tuple[float, float] | None = None
    place: int | None = None
    container: str | None = None
    holder: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.position is not None:
            d["position"] = list(self.position)
        return d

    @classmethod
    def from_dict(cls, d) -> "ObjectState":
        d = dict(d)
        if d.get("position") is not None:
            d["position"] = tuple(d["position"])
        return cls(**d)


@dataclass
class BusState:
    line: int
    arc: float
    dwell: float
    next_stop: int
    at_stop: int | None = None
    passengers: list[str] = field(default_factory=list)


@dataclass
class TransitState:
    buses: list[BusState] = field(default_factory=list)
    docks: dict[int, int] = field(default_factory=dict)
    rented: dict[str, int] = field(default_factory=dict)  # rider -> station rented from

    @property
    def total_bikes(self) -> int:
        return sum(self.docks.values()) + len(self.rented)

    def to_dict(self) -> dict:
        return {
            "buses": [asdict(b) for b in self.buses],
            "docks": {str(k): v for k, v in self.docks.items()},
            "rented": dict(self.rented),
        }

    @classmethod
    def from_dict(cls, d) -> "TransitState":
        return cls(
            [BusState(**b) for b in d["buses"]],
            {int(k): v for k, v in d["docks"].items()},
            dict(d["rented"]),
        )


@dataclass
class Message:
    sender: str
    text: str


@dataclass
class WorldState:
    sim_time: int
    config: SimConfig
    agents: dict[str, AgentState] = field(default_factory=dict)
    transit: TransitState = field(default_factory=TransitState)
    objects: dict[str, ObjectState] = field(default_factory=dict)
    seed: int = 0
    rng_state: dict | None = None
    trace: list[dict] = field(default_factory=list)
    digest: str = ""
    inbox: dict[str, list[Message]] = field(default_factory=dict)
    signals: list[dict] = field(default_factory=list)
    traffic: Any = None

    def rng(self) -> np.random.Generator:
        g = np.random.default_rng(self.seed)
        if self.rng_state is not None:
            g.bit_generator.state = self.rng_state
        return g

    def to_dict(self) -> dict:
        return {
            "schema": STATE_SCHEMA,
            "sim_time": self.sim_time,
            "config": asdict(self.config),
            "agents": {k: a.to_dict() for k, a in self.agents.items()},
            "transit": self.transit.to_dict(),
            "objects": {k: o.to_dict() for k, o in self.objects.items()},
            "seed": self.seed,
            "rng_state": self.rng_state,
            "trace": self.trace,
            "digest": self.digest,
            "inbox": {k: [asdict(m) for m in v] for k, v in self.inbox.items()},
            "signals": self.signals,
            "traffic": None if self.traffic is None else self.traffic.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d) -> "WorldState":
        if d.get("schema") != STATE_SCHEMA:
            raise SimError(f"unsupported state schema {d.get('schema')!r}")
        traffic = None
        if d.get("traffic") is not None:
            from .traffic import TrafficState

            traffic = TrafficState.from_dict(d["traffic"])
        return cls(
            sim_time=d["sim_time"],
            config=SimConfig(**d["config"]),
            agents={k: AgentState.from_dict(a) for k, a in d["agents"].items()},
            transit=TransitState.from_dict(d["transit"]),
            objects={k: ObjectState.from_dict(o) for k, o in d["objects"].items()},
            seed=d["seed"],
            rng_state=d["rng_state"],
            trace=list(d["trace"]),
            digest=d["digest"],
            inbox={k: [Message(**m) for m in v] for k, v in d["inbox"].items()},
            signals=list(d["signals"]),
            traffic=traffic,
        )

    @classmethod
    def from_json(cls, text: str) -> "WorldState":
        return cls.from_dict(json.loads(text))

    def digest_chain(self) -> list[str]:
        return [r["digest"] for r in self.trace if r["event"] == "digest"]


@dataclass
class VisibleEntity:
    id: Any
    kind: str  # agent | object | bus (id = line) | station | stop (id = place) | building_door (id = place)
    position: tuple[float, float]
    distance: float
    container: str | None = None


@dataclass
class Observation:
    agent_id: str
    sim_time: int
    pose: tuple[float, float, float]
    mode: str
    visible_entities: list[VisibleEntity]
    events: list[tuple[str, str]]
    cash: float
    accessible_places: list[int]
    action_status: ActionStatus
    current_place: int | None
    held: list
    rays: list[tuple[float, float | None]] = field(default_factory=list)
    bus_line: int | None = None
    bus_stop: int | None = None  # stop place id while the carrying bus dwells

    def visible(self, kind: str) -> list[VisibleEntity]:
        return [e for e in self.visible_entities if e.kind == kind]

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "sim_time": self.sim_time,
            "pose": list(self.pose),
            "mode": self.mode,
            "visible_entities": [
                {k: v for k, v in asdict(e).items() if v is not None} | {"position": list(e.position)}
                for e in self.visible_entities
            ],
            "events": [list(e) for e in self.events],
            "cash": self.cash,
            "accessible_places": self.accessible_places,
            "action_status": self.action_status.to_dict(),
            "current_place": self.current_place,
            "held": self.held,
            "bus_line": self.bus_line,
            "bus_stop": self.bus_stop,
        }


# --------------------------------------------------------------------------
# construction


def init_state(world: WorldMap, config: SimConfig | None = None, seed: int = 0) -> WorldState:
    """Empty world at time 0 with buses at their first stops and full bike docks."""
    cfg = config or SimConfig()
    cfg.check()
    transit = TransitState()
    for line in sorted(world.bus_lines.values(), key=lambda l: l.id):
        period = line.loop_length / cfg.bus_speed + len(line.stops) * cfg.dwell_time
        for k in range(cfg.buses_per_line):
            bus = BusState(line.id, line.stop_arcs[0], cfg.dwell_time, 1 % len(line.stops), at_stop=0)
            if k:
                _advance_bus(bus, line, k * period / cfg.buses_per_line, cfg)
            transit.buses.append(bus)
    for s in sorted(world.stations.values(), key=lambda s: s.id):
        transit.docks[s.id] = s.initial_count
    state = WorldState(0, cfg, transit=transit, seed=seed)
    state.rng_state = np.random.default_rng(seed).bit_generator.state
    return state


def add_agent(
    state: WorldState,
    agent_id: str,
    pos: tuple[float, float],
    heading: float = 0.0,
    cash: float = 0.0,
    place: int | None = None,
) -> AgentState:
    if agent_id in state.agents:
        raise SimError(f"duplicate agent {agent_id}")
    a = AgentState(agent_id, float(pos[0]), float(pos[1]), float(heading), cash=float(cash))
    if place is not None:
        a.mode, a.place = INSIDE, place
    state.agents[agent_id] = a
    return a


def add_object(state: WorldState, obj_id: str, kind: str, position=None, place=None, container=None) -> ObjectState:
    if obj_id in state.objects:
        raise SimError(f"duplicate object {obj_id}")
    if (position is None) == (place is None):
        raise SimError("object needs exactly one of position or place")
    o = ObjectState(obj_id, kind, None if position is None else (float(position[0]), float(position[1])), place, container)
    state.objects[obj_id] = o
    return o


# --------------------------------------------------------------------------
# transit


def bus_position(world: WorldMap, bus: BusState) -> tuple[tuple[float, float], float]:
    return point_at_arc(world.bus_lines[bus.line].route, bus.arc)


def _advance_bus(bus: BusState, line, dt: float, cfg: SimConfig) -> None:
    L = line.loop_length
    n = len(line.stop_arcs)
    t = float(dt)
    guard = 0
    while t > 1e-12:
        guard += 1
        if guard > 100000:
            raise SimError("bus advance did not converge")
        if bus.dwell > 0:
            use = min(bus.dwell, t)
            bus.dwell -= use
            t -= use
            if bus.dwell <= 1e-12:
                bus.dwell = 0.0
                bus.at_stop = None
            continue
        target = line.stop_arcs[bus.next_stop]
        gap = (target - bus.arc) % L
        travel = cfg.bus_speed * t
        if travel >= gap - 1e-9:
            t -= gap / cfg.bus_speed
            bus.arc = target
            bus.at_stop = bus.next_stop
            bus.dwell = cfg.dwell_time
            bus.next_stop = (bus.next_stop + 1) % n
            if cfg.dwell_time == 0:
                bus.at_stop = None
        else:
            bus.arc = (bus.arc + travel) % L
            t = 0.0


def advance_buses(state: WorldState, world: WorldMap, dt: float) -> TransitState:
    """Move every bus ``dt`` seconds along its loop, dwelling at stops; carry passengers."""
    if not dt > 0:
        raise SimError("dt must be positive")
    for bus in state.transit.buses:
        _advance_bus(bus, world.bus_lines[bus.line], dt, state.config)
        if bus.passengers:
            (x, y), h = bus_position(world, bus)
            for aid in bus.passengers:
                a = state.agents[aid]
                a.x, a.y, a.heading = x, y, h
    return state.transit


# --------------------------------------------------------------------------
# collision / motion


def _collides(state: WorldState, world: WorldMap, agent: AgentState, old, new) -> bool:
    r = state.config.agent_radius
    c_new = world.clearance(new, r + 0.5)
    if c_new < r:
        c_old = world.clearance(old, r + 0.5)
        if c_new < c_old - 1e-12 or c_new == 0.0:
            return True
    for other in state.agents.values():
        if other.id == agent.id or not other.outdoors:
            continue
        d_new = dist(new, other.pos)
        if d_new < 2 * r and d_new < dist(old, other.pos) - 1e-12:
            return True
    return False


def _motion_phase(state: WorldState, world: WorldMap, movers: dict[str, float], events: list) -> dict[str, float]:
    """Interleaved sub-stepping for all movers; returns distance actually travelled."""
    n = state.config.substeps
    moved = {aid: 0.0 for aid in movers}
    blocked: set[str] = set()
    for _ in range(n):
        for aid in sorted(movers):
            if aid in blocked or movers[aid] <= 0:
                continue
            a = state.agents[aid]
            step_len = movers[aid] / n
            new = (a.x + step_len * math.cos(a.heading), a.y + step_len * math.sin(a.heading))
            if _collides(state, world, a, a.pos, new):
                blocked.add(aid)
                continue
            a.x, a.y = new
            moved[aid] += step_len
    for aid in sorted(blocked):
        events.append({"event": "blocked", "agent": aid})
    state._blocked = blocked  # type: ignore[attr-defined]
    return moved


def apply_motion(state: WorldState, world: WorldMap, agent_id: str, distance: float, substeps: int | None = None) -> tuple[float, bool]:
    """Advance one agent straight ahead, stopping before the first colliding sub-step.

    Returns ``(distance travelled, blocked)`` and sets the agent's status to
    ``failed("blocked")`` when motion was cut short.
    """
    a = state.agents[agent_id]
    n = substeps or state.config.substeps
    step_len = distance / n if n else 0.0
    moved = 0.0
    for _ in range(n):
        new = (a.x + step_len * math.cos(a.heading), a.y + step_len * math.sin(a.heading))
        if _collides(state, world, a, a.pos, new):
            a.status = ActionStatus.failed("blocked")
            return moved, True
        a.x, a.y = new
        moved += step_len
    return moved, False


def _free_spot(state: WorldState, world: WorldMap, p, exclude: str) -> tuple[float, float]:
    r = state.config.agent_radius
    for ring in range(0, 8):
        rad = ring * 0.7
        for k in range(1 if ring == 0 else 8):
            ang = k * math.pi / 4
            q = (p[0] + rad * math.cos(ang), p[1] + rad * math.sin(ang))
            if world.clearance(q, r + 0.5) < r:
                continue
            if any(dist(q, o.pos) < 2 * r for o in state.agents.values() if o.id != exclude and o.outdoors):
                continue
            return q
    return (float(p[0]), float(p[1]))


# --------------------------------------------------------------------------
# discrete actions


def _log(events, event, agent=None, **kw):
    rec = {"event": event}
    if agent is not None:
        rec["agent"] = agent
    rec.update(kw)
    events.append(rec)


def board_bus(state: WorldState, world: WorldMap, agent_id: str, line: int, events: list | None = None) -> str | None:
    """Board a bus of ``line`` dwelling within the boarding radius. Returns a failure reason or None."""
    events = [] if events is None else events
    a = state.agents[agent_id]
    cfg = state.config
    if a.mode != WALKING:
        return "not walking"
    best = None
    for i, bus in enumerate(state.transit.buses):
        if bus.line != line or bus.at_stop is None:
            continue
        (bx, by), _ = bus_position(world, bus)
        d = dist(a.pos, (bx, by))
        if d <= cfg.interact_radius and (best is None or d < best[0]):
            best = (d, i)
    if best is None:
        return "no bus"
    if a.cash < cfg.bus_fare:
        return "insufficient cash"
    bus = state.transit.buses[best[1]]
    a.cash -= cfg.bus_fare
    a.fares_paid += cfg.bus_fare
    a.mode, a.line, a.bus = ON_BUS, line, best[1]
    bus.passengers.append(agent_id)
    (a.x, a.y), a.heading = bus_position(world, bus)
    _log(events, "board", agent_id, line=line, bus=best[1], fare=cfg.bus_fare)
    return None


def alight_bus(state: WorldState, world: WorldMap, agent_id: str, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    if a.mode != ON_BUS:
        return "not on bus"
    bus = state.transit.buses[a.bus]
    if bus.at_stop is None:
        return "bus moving"
    stop_place = world.bus_lines[bus.line].stops[bus.at_stop]
    bus.passengers.remove(agent_id)
    a.mode, a.line, a.bus = WALKING, None, None
    a.x, a.y = _free_spot(state, world, bus_position(world, bus)[0], agent_id)
    _log(events, "alight", agent_id, stop=stop_place)
    return None


def rent_bike(state: WorldState, world: WorldMap, agent_id: str, station: int, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    cfg = state.config
    if a.mode != WALKING:
        return "not walking"
    if station not in world.stations:
        return "unknown station"
    if dist(a.pos, world.stations[station].location) > cfg.interact_radius:
        return "too far"
    if state.transit.docks.get(station, 0) < 1:
        return "no bikes"
    if a.cash < cfg.bike_rate:
        return "insufficient cash"
    state.transit.docks[station] -= 1
    state.transit.rented[agent_id] = station
    a.mode = RIDING
    a.rental = {"station": station, "start": state.sim_time}
    _log(events, "rent", agent_id, station=station)
    return None


def bike_price(seconds: float, rate: float) -> float:
    """Per-started-minute pricing with a one-minute minimum."""
    minutes = max(1, math.ceil(seconds / 60.0 - 1e-9))
    return rate * minutes


def return_bike(state: WorldState, world: WorldMap, agent_id: str, station: int | None = None, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    cfg = state.config
    if a.mode != RIDING:
        return "not riding"
    if station is None:
        near = [(dist(a.pos, s.location), s.id) for s in world.stations.values()]
        near = [t for t in near if t[0] <= cfg.interact_radius]
        if not near:
            return "no station"
        station = min(near)[1]
    if station not in world.stations:
        return "unknown station"
    if dist(a.pos, world.stations[station].location) > cfg.interact_radius:
        return "too far"
    price = bike_price(state.sim_time - a.rental["start"], cfg.bike_rate)
    charged = min(price, a.cash)
    a.cash -= charged
    a.bike_paid += charged
    state.transit.docks[station] = state.transit.docks.get(station, 0) + 1
    del state.transit.rented[agent_id]
    a.mode, a.rental = WALKING, None
    _log(events, "return", agent_id, station=station, price=charged)
    return None


def pick(state: WorldState, world: WorldMap, agent_id: str, obj: str, arm: int | None = None, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    if obj not in state.objects:
        return "unknown object"
    o = state.objects[obj]
    if o.holder is not None:
        return "not available"
    if None not in a.arms:
        return "hands full"
    if arm is None:
        arm = a.arms.index(None)
    elif a.arms[arm] is not None:
        return "arm busy"
    if a.mode == INSIDE:
        if o.place != a.place:
            return "out of reach"
    elif a.mode == WALKING:
        if o.position is None or dist(a.pos, o.position) > state.config.reach:
            return "out of reach"
    else:
        return "cannot pick now"
    a.arms[arm] = obj
    o.holder, o.position, o.place, o.container = agent_id, None, None, None
    _log(events, "pick", agent_id, obj=obj, arm=arm)
    return None


def put(state: WorldState, world: WorldMap, agent_id: str, obj: str, point=None, container: str | None = None, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    if obj not in a.arms:
        return "not held"
    o = state.objects[obj]
    if a.mode == INSIDE:
        container = container or "floor"
        if container not in ROOM_CONTAINERS:
            return "unknown container"
        o.place, o.container, o.position = a.place, container, None
    elif a.mode == WALKING:
        target = a.pos if point is None else (float(point[0]), float(point[1]))
        if dist(a.pos, target) > state.config.reach:
            return "out of reach"
        if world.building_at(target) is not None:
            return "blocked"
        o.position, o.place, o.container = target, None, None
    else:
        return "cannot put now"
    a.arms[a.arms.index(obj)] = None
    o.holder = None
    _log(events, "put", agent_id, obj=obj, place=o.place, container=o.container, position=list(o.position) if o.position else None)
    return None


def enter_place(state: WorldState, world: WorldMap, agent_id: str, place: int, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    if a.mode != WALKING:
        return "not walking"
    if place not in world.places:
        return "unknown place"
    if dist(a.pos, world.places[place].door) > state.config.interact_radius:
        return "too far"
    a.mode, a.place = INSIDE, place
    a.x, a.y = world.places[place].door
    _log(events, "enter_place", agent_id, place=place)
    return None


def exit_place(state: WorldState, world: WorldMap, agent_id: str, events: list | None = None) -> str | None:
    events = [] if events is None else events
    a = state.agents[agent_id]
    if a.mode != INSIDE:
        return "not inside"
    place = a.place
    a.mode, a.place = WALKING, None
    a.x, a.y = _free_spot(state, world, world.access_point(place), agent_id)
    _log(events, "exit_place", agent_id, place=place)
    return None


# --------------------------------------------------------------------------
# sensing


def sense(state: WorldState, world: WorldMap, agent_id: str) -> Observation:
    """Observation for one agent against the current state."""
    a = state.agents[agent_id]
    cfg = state.config
    R, half = cfg.sense_range, cfg.fov / 2
    vis: list[VisibleEntity] = []
    rays: list[tuple[float, float | None]] = []
    accessible: list[int] = []
    bus_stop = None
    if a.mode == ON_BUS:
        bus = state.transit.buses[a.bus]
        if bus.at_stop is not None:
            bus_stop = world.bus_lines[bus.line].stops[bus.at_stop]
    if a.mode == INSIDE:
        for o in sorted(state.objects.values(), key=lambda o: o.id):
            if o.place == a.place and o.holder is None:
                vis.append(VisibleEntity(o.id, "object", world.places[a.place].door, 0.0, o.container))
        for other in sorted(state.agents.values(), key=lambda o: o.id):
            if other.id != a.id and other.mode == INSIDE and other.place == a.place:
                vis.append(VisibleEntity(other.id, "agent", other.pos, 0.0))
        accessible = [a.place]
    else:
        origin = a.pos

        def consider(eid, kind, p):
            d = dist(origin, p)
            if d > R:
                return
            if d > 1e-9:
                bearing = math.atan2(p[1] - origin[1], p[0] - origin[0])
                if abs(wrap_angle(bearing - a.heading)) > half + 1e-12:
                    return
                if not world.line_of_sight(origin, p):
                    return
            vis.append(VisibleEntity(eid, kind, (float(p[0]), float(p[1])), d))

        for other in sorted(state.agents.values(), key=lambda o: o.id):
            if other.id != a.id and other.outdoors:
                consider(other.id, "agent", other.pos)
        for o in sorted(state.objects.values(), key=lambda o: o.id):
            if o.position is not None and o.holder is None:
                consider(o.id, "object", o.position)
        for i, bus in enumerate(state.transit.buses):
            if a.mode == ON_BUS and i == a.bus:
                continue
            consider(bus.line, "bus", bus_position(world, bus)[0])
        for s in sorted(world.stations.values(), key=lambda s: s.id):
            consider(s.id, "station", s.location)
        for pid in sorted(world.stop_index):
            consider(pid, "stop", world.stop_point(pid))
        for p in sorted(world.places.values(), key=lambda p: p.id):
            if dist(origin, p.door) <= R:
                consider(p.id, "building_door", p.door)
            if a.mode == WALKING and dist(origin, p.door) <= cfg.interact_radius:
                accessible.append(p.id)
        if cfg.n_rays > 0:
            if cfg.n_rays == 1:
                angles = np.array([a.heading])
            else:
                angles = a.heading + np.linspace(-half, half, cfg.n_rays)
            hits = world.cast_rays(origin, angles, R)
            rays = [(float(t), None if not np.isfinite(h) else float(h)) for t, h in zip(angles, hits)]
    return Observation(
        agent_id=agent_id,
        sim_time=state.sim_time,
        pose=(a.x, a.y, a.heading),
        mode=a.mode,
        visible_entities=vis,
        events=[(m.sender, m.text) for m in state.inbox.get(agent_id, [])],
        cash=a.cash,
        accessible_places=accessible,
        action_status=copy.copy(a.status),
        current_place=a.place if a.mode == INSIDE else None,
        held=list(a.arms),
        rays=rays,
        bus_line=a.line,
        bus_stop=bus_stop,
    )


# --------------------------------------------------------------------------
# the tick


def _speed_cap(cfg: SimConfig, mode: str) -> float:
    return cfg.bike_speed if mode == RIDING else cfg.walk_speed


def step(
    state: WorldState,
    world: WorldMap,
    actions: Mapping[str, Action | None],
    observe: Iterable[str] | None = None,
) -> tuple[WorldState, dict[str, Observation]]:
    """Advance one tick. Agents absent from ``actions`` (or mapped to None) continue any ongoing motion."""
    for aid in actions:
        if aid not in state.agents:
            raise SimError(f"unknown agent {aid!r}")
    cfg = state.config
    events: list[dict] = []
    state.inbox = {}
    state.signals = []
    outbox: list[tuple[str, str, tuple[float, float]]] = []
    movers: dict[str, float] = {}
    for aid in sorted(state.agents):
        a = state.agents[aid]
        act = actions.get(aid)
        if act is None:
            if a.status.kind == "ongoing" and a.status.action is not None:
                act = a.status.action
                remaining = a.status.remaining
            else:
                continue
        else:
            remaining = act.distance if act.kind == "move_forward" else 0.0
            events.append({"event": "action", "agent": aid, "action": act.to_dict()})
        bad = act.validate(cfg.max_text)
        if bad:
            a.status = ActionStatus.failed(bad)
            events.append({"event": "failed", "agent": aid, "reason": bad})
            continue
        reason = None
        k = act.kind
        if k == "wait":
            a.status = ActionStatus.failed(act.reason) if act.reason else ActionStatus()
            continue
        if k == "move_forward":
            if not a.outdoors:
                reason = "cannot move now"
            else:
                d = min(remaining, _speed_cap(cfg, a.mode))
                movers[aid] = d
                a.status = ActionStatus("ongoing", action=act, remaining=remaining)
                continue
        elif k == "turn":
            if a.mode == INSIDE or a.mode == ON_BUS:
                reason = "cannot turn now"
            else:
                a.heading = wrap_angle(a.heading + act.angle)
        elif k == "enter_bus":
            reason = board_bus(state, world, aid, act.line, events)
        elif k == "exit_bus":
            reason = alight_bus(state, world, aid, events)
        elif k == "enter_bike":
            reason = rent_bike(state, world, aid, act.station, events)
        elif k == "exit_bike":
            reason = return_bike(state, world, aid, act.station, events)
        elif k == "enter_place":
            reason = enter_place(state, world, aid, act.place, events)
        elif k == "exit_place":
            reason = exit_place(state, world, aid, events)
        elif k == "pick":
            reason = pick(state, world, aid, act.obj, act.arm, events)
        elif k == "put":
            reason = put(state, world, aid, act.obj, act.point, act.container, events)
        elif k == "communicate":
            outbox.append((aid, act.text, a.pos))
            _log(events, "message", aid, text=act.text)
        elif k == "task_complete":
            state.signals.append({"agent": aid, "subtask": act.subtask, "position": [a.x, a.y], "place": a.place})
            _log(events, "task_complete", aid, subtask=act.subtask)
        a.status = ActionStatus.failed(reason) if reason else ActionStatus()
        if reason:
            events.append({"event": "failed", "agent": aid, "reason": reason})

    for sender, text, spos in outbox:
        for rid in sorted(state.agents):
            if rid != sender and dist(spos, state.agents[rid].pos) <= cfg.comm_radius:
                state.inbox.setdefault(rid, []).append(Message(sender, text))

    if movers:
        moved = _motion_phase(state, world, movers, events)
        blocked = state._blocked  # type: ignore[attr-defined]
        for aid, d in moved.items():
            a = state.agents[aid]
            if a.mode == WALKING:
                a.walked += d
            else:
                a.ridden += d
            if aid in blocked:
                a.status = ActionStatus.failed("blocked")
            else:
                left = a.status.remaining - movers[aid]
                if left > 1e-9:
                    a.status = ActionStatus("ongoing", action=a.status.action, remaining=left)
                else:
                    a.status = ActionStatus()
        del state._blocked  # type: ignore[attr-defined]

    if state.transit.buses:
        advance_buses(state, world, 1.0)
    if state.traffic is not None:
        from .traffic import spawn_and_step_traffic

        state.traffic = spawn_and_step_traffic(world, state.traffic, state.seed, 1.0)

    state.sim_time += 1
    _seal_tick(state, events)
    ids = sorted(state.agents) if observe is None else list(observe)
    return state, {aid: sense(state, world, aid) for aid in ids}


def _pose_summary(state: WorldState) -> list:
    return [
        [a.id, a.x, a.y, a.heading, a.mode, a.cash, a.arms]
        for a in (state.agents[k] for k in sorted(state.agents))
    ]


def _seal_tick(state: WorldState, events: list[dict]) -> None:
    for e in events:
        e["tick"] = state.sim_time
        state.trace.append(e)
    payload = json.dumps(
        {
            "prev": state.digest,
            "t": state.sim_time,
            "events": events,
            "agents": _pose_summary(state),
            "buses": [[b.arc, b.dwell, b.at_stop] for b in state.transit.buses],
            "docks": sorted(state.transit.docks.items()),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    state.digest = hashlib.sha256(payload.encode()).hexdigest()
    state.trace.append({"tick": state.sim_time, "event": "digest", "digest": state.digest})


def idle(state: WorldState, world: WorldMap, seconds: int) -> WorldState:
    """Fast-forward ``seconds`` ticks in which every agent waits.

    Equivalent in outcome to ``seconds`` calls of ``step`` with all agents
    waiting and no traffic, but sealed as a single trace record.
    """
    seconds = int(seconds)
    if seconds <= 0:
        return state
    if state.traffic is not None:
        for _ in range(seconds):
            step(state, world, {}, observe=())
        return state
    if any(a.mode in (WALKING, RIDING) and a.status.kind == "ongoing" for a in state.agents.values()):
        raise SimError("idle() requires no ongoing motion")
    if state.transit.buses:
        advance_buses(state, world, float(seconds))
    state.inbox = {}
    state.signals = []
    state.sim_time += seconds
    _seal_tick(state, [{"event": "idle", "seconds": seconds}])
    return state


def write_trace(trace: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
