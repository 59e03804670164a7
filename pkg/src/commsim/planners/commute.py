"""Commute planning: direct walking, UCB1 Monte-Carlo tree search, and plan execution.

Plans are sequences of legs. A leg names where it ends (a place, which may
be a bus stop, or a bike station) and how the agent gets there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..geometry import dist
from ..simcore import INSIDE, ON_BUS, RIDING, WALKING, Action, Observation
from .base import Planner

TRANSIT_TYPES = ("walk", "bus", "bike")
DEFAULT_SPEEDS = {"walk": 2.0, "bike": 5.0, "bus": 10.0}


@dataclass(frozen=True)
class Leg:
    transit_type: str
    place: int | None = None
    station: int | None = None

    def __post_init__(self):
        if self.transit_type not in TRANSIT_TYPES:
            raise ValueError(f"unknown transit type {self.transit_type!r}")
        if (self.place is None) == (self.station is None):
            raise ValueError("a leg ends at exactly one of a place or a station")


def station_name(sid: int) -> str:
    return f"Bike Station {sid}"


@dataclass
class CommutePlan:
    legs: list[Leg]

    def __post_init__(self):
        if not self.legs:
            raise ValueError("commute plan needs at least one leg")

    @property
    def destination(self) -> int | None:
        return self.legs[-1].place

    def to_json_list(self, world) -> list[dict]:
        out = []
        for leg in self.legs:
            name = world.places[leg.place].name if leg.place is not None else station_name(leg.station)
            out.append({"goal_place": name, "transit_type": leg.transit_type})
        return out

    @classmethod
    def from_json_list(cls, items: Sequence[dict], world) -> "CommutePlan":
        legs = []
        for it in items:
            name, kind = it["goal_place"], it["transit_type"]
            if name in world.place_by_name:
                legs.append(Leg(kind, place=world.place_by_name[name].id))
            elif isinstance(name, str) and name.startswith("Bike Station "):
                sid = int(name.rsplit(" ", 1)[1])
                if sid not in world.stations:
                    raise ValueError(f"unknown station {name!r}")
                legs.append(Leg(kind, station=sid))
            else:
                raise ValueError(f"unknown place {name!r}")
        return cls(legs)


def direct_walk_plan(start, destination: int) -> CommutePlan:
    """Walk straight to the destination; ``start`` is unused."""
    return CommutePlan([Leg("walk", place=destination)])


# --------------------------------------------------------------------------
# tree search


@dataclass
class TransitGraph:
    """The public transit knowledge MCTS reasons over: stop and station positions and line membership."""

    stops: dict[int, tuple[float, float]]
    lines: dict[int, list[int]]
    stations: dict[int, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def from_world(cls, world) -> "TransitGraph":
        stops = {pid: tuple(world.stop_point(pid)) for pid in sorted(world.stop_index)}
        lines = {l.id: list(l.stops) for l in world.bus_lines.values()}
        stations = {s.id: tuple(s.location) for s in world.stations.values()}
        return cls(stops, lines, stations)

    def nearest_stop(self, p) -> int | None:
        best = None
        for sid in sorted(self.stops):
            d = dist(p, self.stops[sid])
            if best is None or d < best[0]:
                best = (d, sid)
        return None if best is None else best[1]

    def nearest_station(self, p) -> int | None:
        best = None
        for sid in sorted(self.stations):
            d = dist(p, self.stations[sid])
            if best is None or d < best[0]:
                best = (d, sid)
        return None if best is None else best[1]

    def reachable_stops(self, stop: int) -> list[int]:
        out = set()
        for members in self.lines.values():
            if stop in members:
                out.update(members)
        out.discard(stop)
        return sorted(out)

    def shared_line(self, a: int, b: int) -> int | None:
        for lid in sorted(self.lines):
            if a in self.lines[lid] and b in self.lines[lid]:
                return lid
        return None


@dataclass
class MctsNode:
    location: tuple[float, float]
    mode: str  # walk | bus | bike, how this node was reached (root: walk)
    d_walk: float = 0.0
    d_bike: float = 0.0
    d_bus: float = 0.0
    parent: "MctsNode | None" = field(default=None, repr=False)
    children: list["MctsNode"] = field(default_factory=list, repr=False)
    N: int = 0
    W: float = 0.0
    board: int | None = None  # stop or station boarded on the way here
    ref: int | None = None  # stop or station this node sits at
    terminal: bool = False
    expanded: bool = False

    @property
    def mean(self) -> float:
        return self.W / self.N if self.N else -math.inf


def simulate_reward(node: MctsNode, goal, alpha: float = 1.0, speeds: dict | None = None) -> float:
    """Negative travel time so far minus alpha times the straight-line distance left."""
    sp = speeds or DEFAULT_SPEEDS
    if min(sp["walk"], sp["bike"], sp["bus"]) <= 0:
        raise ValueError("speeds must be positive")
    d_target = dist(node.location, goal)
    return -(node.d_walk / sp["walk"] + node.d_bike / sp["bike"] + node.d_bus / sp["bus"]) - alpha * d_target


def mcts_expand(node: MctsNode, transit: TransitGraph, goal, step: float = 25.0) -> list[MctsNode]:
    """Children: one walk step toward the goal, a bus ride from the nearest stop to each stop on a shared line,
    a bike ride from the nearest station to each other station."""
    node.expanded = True
    if node.terminal:
        return []
    loc = node.location
    kids: list[MctsNode] = []
    d = dist(loc, goal)
    if d <= step:
        nxt, walked = (float(goal[0]), float(goal[1])), d
    else:
        t = step / d
        nxt, walked = (loc[0] + t * (goal[0] - loc[0]), loc[1] + t * (goal[1] - loc[1])), step
    kids.append(MctsNode(nxt, "walk", node.d_walk + walked, node.d_bike, node.d_bus, node, terminal=walked == d))
    # riding on from where a ride of the same mode ended is never shorter than one direct ride
    # (triangle inequality), so those children are left out
    ns = transit.nearest_stop(loc) if node.mode != "bus" else None
    if ns is not None:
        to_stop = dist(loc, transit.stops[ns])
        for s in transit.reachable_stops(ns):
            ride = dist(transit.stops[ns], transit.stops[s])
            kids.append(MctsNode(transit.stops[s], "bus", node.d_walk + to_stop, node.d_bike, node.d_bus + ride, node, board=ns, ref=s))
    nb = transit.nearest_station(loc) if node.mode != "bike" else None
    if nb is not None:
        to_st = dist(loc, transit.stations[nb])
        for s in sorted(transit.stations):
            if s == nb:
                continue
            ride = dist(transit.stations[nb], transit.stations[s])
            kids.append(MctsNode(transit.stations[s], "bike", node.d_walk + to_st, node.d_bike + ride, node.d_bus, node, board=nb, ref=s))
    node.children = kids
    return kids


def ucb1_select(node: MctsNode, c: float = 1.41, rng: np.random.Generator | None = None) -> MctsNode:
    """First unvisited child (lowest index), else the UCB1 argmax; exact ties go to the lowest index
    unless an rng is supplied to break them."""
    if not node.children:
        raise ValueError("node has no children")
    for ch in node.children:
        if ch.N == 0:
            return ch
    ln = math.log(node.N)
    scores = [ch.W / ch.N + c * math.sqrt(ln / ch.N) for ch in node.children]
    best = max(scores)
    ties = [i for i, s in enumerate(scores) if s == best]
    i = ties[0] if rng is None or len(ties) == 1 else ties[int(rng.integers(len(ties)))]
    return node.children[i]


@dataclass
class MctsResult:
    plan: CommutePlan | None
    path: list[MctsNode]
    reward: float
    iterations: int
    root: MctsNode


def _path_to(node: MctsNode) -> list[MctsNode]:
    out = [node]
    while out[-1].parent is not None:
        out.append(out[-1].parent)
    return out[::-1]


def walk_completion(node: MctsNode, goal) -> MctsNode:
    """The goal leaf reached from ``node`` by walk children alone (they step straight at the goal)."""
    d = dist(node.location, goal)
    return MctsNode((float(goal[0]), float(goal[1])), "walk", node.d_walk + d, node.d_bike, node.d_bus, node, terminal=True)


def mcts_search(
    transit: TransitGraph,
    start,
    goal,
    budget: int = 10000,
    alpha: float = 1.0,
    c: float = 1.41,
    seed: int = 0,
    speeds: dict | None = None,
    step: float = 25.0,
) -> MctsResult:
    """Select / expand / simulate / backpropagate for ``budget`` iterations.

    Simulation is the closed-form immediate reward. The returned path ends
    at the best goal-reaching leaf seen: either a visited terminal node or
    the walk-only completion of a visited node, which is itself a leaf of
    the same tree, so its reward is an exact tree reward.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    root = MctsNode((float(start[0]), float(start[1])), "walk")
    root.terminal = dist(root.location, goal) == 0.0
    best_leaf = root if root.terminal else walk_completion(root, goal)
    best_r = simulate_reward(best_leaf, goal, alpha, speeds)
    for _ in range(budget):
        node = root
        while node.expanded and node.children:
            node = ucb1_select(node, c, rng)
        if not node.terminal and (node is root or node.N > 0) and not node.expanded:
            kids = mcts_expand(node, transit, goal, step)
            if kids:
                node = kids[0]
        r = simulate_reward(node, goal, alpha, speeds)
        leaf = node if node.terminal else walk_completion(node, goal)
        lr = r if node.terminal else simulate_reward(leaf, goal, alpha, speeds)
        if lr > best_r:
            best_r, best_leaf = lr, leaf
        n = node
        while n is not None:
            n.N += 1
            n.W += r
            n = n.parent
    return MctsResult(None, _path_to(best_leaf), best_r, budget, root)


def path_legs(path: list[MctsNode]) -> list[tuple[str, str, int | None]]:
    """Collapse a tree path into (transit, target kind, target id) legs, excluding the closing walk."""
    legs: list[tuple[str, str, int | None]] = []
    for n in path[1:]:
        if n.mode == "bus":
            legs.append(("walk", "stop", n.board))
            legs.append(("bus", "stop", n.ref))
        elif n.mode == "bike":
            legs.append(("walk", "station", n.board))
            legs.append(("bike", "station", n.ref))
    return legs


def mcts_plan(
    world,
    start,
    goal_place: int,
    budget: int = 10000,
    alpha: float = 1.0,
    c: float = 1.41,
    seed: int = 0,
    speeds: dict | None = None,
    transit: TransitGraph | None = None,
) -> CommutePlan:
    """MCTS commute plan from ``start`` to place ``goal_place`` on a loaded world."""
    transit = transit or TransitGraph.from_world(world)
    goal = world.access_point(goal_place)
    res = mcts_search(transit, start, goal, budget, alpha, c, seed, speeds)
    legs = []
    for kind, what, ref in path_legs(res.path):
        if what == "stop":
            legs.append(Leg(kind, place=ref))
        else:
            legs.append(Leg(kind, station=ref))
    legs.append(Leg("walk", place=goal_place))
    # a bus or bike leg whose boarding point equals its end is a no-op
    return CommutePlan(_squash(legs))


def _squash(legs: list[Leg]) -> list[Leg]:
    out: list[Leg] = []
    for leg in legs:
        if out and out[-1].transit_type == "walk" and leg.transit_type == "walk":
            out[-1] = leg
        else:
            out.append(leg)
    return out


def plan_time(transit: TransitGraph, start, goal, legs: list[tuple[str, tuple[float, float]]], speeds: dict | None = None) -> float:
    """Closed-form travel time of straight-line legs ``(mode, end point)`` ending at ``goal``."""
    sp = speeds or DEFAULT_SPEEDS
    t, cur = 0.0, tuple(start)
    for mode, p in legs:
        t += dist(cur, p) / sp[mode]
        cur = p
    return t + dist(cur, goal) / sp["walk"]


# --------------------------------------------------------------------------
# execution


class CommuteExecutor(Planner):
    """Carries out one :class:`CommutePlan` in the simulator.

    Walk legs navigate to the leg's door (or bus stop / station); bus legs
    wait at the stop for a dwelling bus of a line serving the target stop and
    ride until the bus dwells there; bike legs rent at the nearest station,
    ride to the target station and return the bike.
    """

    name = "commute"

    def __init__(self, world, plan: CommutePlan, navigator=None, arrive_radius: float = 4.0):
        from ..nav import Navigator

        self.world = world
        self.plan = plan
        self.nav = navigator or Navigator(world)
        self.leg = 0
        self.arrive_radius = arrive_radius
        self.phase = "go"
        self.done = False
        self.failed: str | None = None
        self._waited = 0

    @property
    def terminal(self) -> bool:
        return self.done or self.failed is not None

    def _target(self, leg: Leg):
        w = self.world
        if leg.station is not None:
            return w.stations[leg.station].location
        if leg.transit_type == "bus" or (leg.place in w.stop_index and self._next_is_bus()):
            return w.stop_point(leg.place)
        return w.access_point(leg.place)

    def _next_is_bus(self) -> bool:
        nxt = self.leg + 1
        return nxt < len(self.plan.legs) and self.plan.legs[nxt].transit_type == "bus"

    def act(self, obs: Observation) -> Action:
        if self.failed is not None:
            return Action.wait()
        if self.done:
            dest = self.plan.destination
            if obs.mode == INSIDE or dest is None:
                return Action.wait()
            if obs.mode == RIDING:
                return Action.exit_bike()
            if dest not in obs.accessible_places:
                a = self.nav.step_toward(obs, self.world.places[dest].door, 2.0)
                if a is not None:
                    return a
            return Action.enter_place(dest)
        if obs.mode == INSIDE:
            return Action.exit_place()
        leg = self.plan.legs[self.leg]
        kind = leg.transit_type
        if kind == "walk":
            if obs.mode == RIDING:
                return Action.exit_bike()
            target = self._target(leg)
            a = self.nav.step_toward(obs, target, self.arrive_radius)
            if a is None:
                return self._advance(obs)
            return a
        if kind == "bus":
            return self._bus(obs, leg)
        return self._bike(obs, leg)

    def _advance(self, obs: Observation) -> Action:
        self.leg += 1
        self.phase = "go"
        self._waited = 0
        if self.leg >= len(self.plan.legs):
            self.done = True
        return self.act(obs)

    def _bus(self, obs: Observation, leg: Leg) -> Action:
        w = self.world
        if obs.mode == ON_BUS:
            if obs.bus_stop == leg.place:
                return Action.exit_bus()
            return Action.wait()
        if self.phase == "ride":
            # just got off
            return self._advance(obs)
        here = min(w.stop_index, key=lambda pid: (dist(obs.pose[:2], w.stop_point(pid)), pid))
        lines = [lid for lid, _ in w.stop_index.get(leg.place, ()) if any(l == lid for l, _ in w.stop_index[here])]
        if not lines:
            self.failed = "no line"
            return Action.wait("no line")
        for e in obs.visible("bus"):
            if e.id in lines and e.distance <= 5.0:
                self.phase = "ride"
                return Action.enter_bus(e.id)
        self._waited += 1
        if dist(obs.pose[:2], w.stop_point(here)) > 2.0:
            a = self.nav.step_toward(obs, w.stop_point(here), 1.0)
            if a is not None:
                return a
        return Action.wait()

    def _bike(self, obs: Observation, leg: Leg) -> Action:
        w = self.world
        target = w.stations[leg.station].location
        if obs.mode == WALKING:
            if self.phase == "ride":
                return self._advance(obs)
            near = [e for e in obs.visible("station") if e.distance <= 5.0]
            if near:
                self.phase = "rent"
                return Action.enter_bike(min(near, key=lambda e: (e.distance, e.id)).id)
            st = min(w.stations.values(), key=lambda s: (dist(obs.pose[:2], s.location), s.id))
            a = self.nav.step_toward(obs, st.location, 3.0)
            return a if a is not None else Action.turn(math.pi / 3)
        # riding
        self.phase = "ride"
        if dist(obs.pose[:2], target) <= 4.0:
            return Action.exit_bike(leg.station)
        a = self.nav.step_toward(obs, target, 3.5, max_step=5.0)
        return a if a is not None else Action.exit_bike(leg.station)


class DirectWalkPlanner:
    """Plan factory for the rule baseline."""

    name = "direct"

    def plan(self, world, start, destination: int) -> CommutePlan:
        return direct_walk_plan(start, destination)


class MctsCommutePlanner:
    name = "mcts"

    def __init__(self, budget: int = 10000, alpha: float = 1.0, c: float = 1.41, seed: int = 0):
        self.budget, self.alpha, self.c, self.seed = budget, alpha, c, seed
        self._transit = None

    def plan(self, world, start, destination: int) -> CommutePlan:
        if self._transit is None:
            self._transit = TransitGraph.from_world(world)
        return mcts_plan(world, start, destination, self.budget, self.alpha, self.c, self.seed, transit=self._transit)
