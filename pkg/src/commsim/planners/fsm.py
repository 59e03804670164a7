"""Heuristic finite-state planners for the assistant tasks.

The delivery automaton follows the published state diagram:

    0 goto(source)      --arrived-->                  1
    1 search near source --found-->                   2
    2 navigate to object --arrived at object-->       3
    3 pick object(s)    --no target & no carrying-->  1
                        --no target & carrying-->     4
                        --hands full-->               4
    4 goto(destination) --arrived-->                  5
    5 drop at destination --empty & not all done-->   0
                          --empty & all done-->       6
    6 send complete     --task_complete-->            7 (finished)

plus the self-loops on 0-5.  Carry and search automata are our own
constructions in the same style.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..geometry import dist
from ..nav import Navigator
from ..simcore import INSIDE, RIDING, Action, Observation
from .base import Dodger, Planner

DELIVERY_EDGES = frozenset(
    {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 1), (3, 3), (3, 4), (4, 4), (4, 5), (5, 5), (5, 0), (5, 6), (6, 7)}
)
DELIVERY_STATES = {
    0: "goto(source)",
    1: "search near source",
    2: "navigate to object",
    3: "pick object(s)",
    4: "goto(destination)",
    5: "drop at destination",
    6: "send complete",
    7: "finished",
}

REACH = 1.5
SCAN_TURN = math.pi / 3


@dataclass
class FsmState:
    index: int = 0
    history: list[tuple[int, int]] = field(default_factory=list)
    target: str | None = None
    done: set = field(default_factory=set)  # object ids dropped at their destination


class _Automaton(Planner):
    edges: frozenset = frozenset()
    final: tuple[int, ...] = ()

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        self.fsm = FsmState()
        self.nav = Navigator(world)
        self._scan = 0
        self._dodger = Dodger()

    @property
    def state(self) -> int:
        return self.fsm.index

    @property
    def terminal(self) -> bool:
        return self.fsm.index in self.final

    def go(self, to: int) -> None:
        frm = self.fsm.index
        if self.edges and (frm, to) not in self.edges:
            raise AssertionError(f"illegal transition {frm}->{to}")
        self.fsm.history.append((frm, to))
        self.fsm.index = to

    def stay(self) -> None:
        self.go(self.fsm.index)

    def goto(self, obs: Observation, point, radius: float = 1.0) -> Action | None:
        """Navigation primitive toward ``point``; None once there (leaving any building first)."""
        if obs.mode == INSIDE:
            return Action.exit_place()
        if obs.mode == RIDING:
            return Action.exit_bike()
        return self.nav.step_toward(obs, point, radius)

    def unstick(self, obs: Observation) -> Action | None:
        return self._dodger(obs)

    def scan(self) -> Action:
        self._scan += 1
        return Action.turn(SCAN_TURN)


class DeliveryFSM(_Automaton):
    """Picks each item up at its source and drops it inside its destination place."""

    name = "heuristic"
    edges = DELIVERY_EDGES
    final = (7,)

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        self.items = {st["obj"]: st for st in task.subtasks if st["type"] == "deliver"}
        self.order = list(self.items)

    # -- bookkeeping

    def pending(self, obs: Observation) -> list[str]:
        return [o for o in self.order if o not in self.fsm.done and o not in obs.held]

    def _source_point(self, item: dict):
        src = item["source"]
        if "place" in src:
            return self.world.access_point(src["place"])
        return tuple(src["point"])

    def _carry_dest(self, obs: Observation) -> int | None:
        held = [o for o in obs.held if o is not None and o in self.items]
        return self.items[held[0]]["destination"] if held else None

    def _target(self, obs: Observation):
        """A pending, visible item within reach that may join what is already carried."""
        dest = self._carry_dest(obs)
        pend = set(self.pending(obs))
        for e in sorted(obs.visible("object"), key=lambda e: (e.distance, e.id)):
            if e.id in pend and e.distance <= REACH and (dest is None or self.items[e.id]["destination"] == dest):
                return e
        return None

    # -- automaton

    def act(self, obs: Observation) -> Action:
        a = self.unstick(obs)
        if a is not None:
            return a
        for _ in range(8):
            a = self._dispatch(obs)
            if a is not None:
                return a
        return Action.wait()

    def _dispatch(self, obs: Observation) -> Action | None:
        s = self.fsm.index
        held = [o for o in obs.held if o is not None]
        if s == 0:
            pend = self.pending(obs)
            if not pend:
                self.stay()
                return Action.wait()
            if self.fsm.target not in pend:
                # nearest remaining source first
                here = obs.pose[:2]
                self.fsm.target = min(pend, key=lambda o: (dist(here, self._source_point(self.items[o])), self.order.index(o)))
            item = self.items[self.fsm.target]
            src = item["source"]
            if "place" in src and obs.mode == INSIDE and obs.current_place == src["place"]:
                self.go(1)
                return None
            a = self.goto(obs, self._source_point(item), 1.0 if "place" in src else 2.5)
            if a is None:
                self._scan = 0
                self.go(1)
                return None
            self.stay()
            return a
        if s == 1:
            item = self.items.get(self.fsm.target)
            src = item["source"] if item else {}
            if "place" in src and obs.mode != INSIDE:
                if src["place"] in obs.accessible_places:
                    self.stay()
                    return Action.enter_place(src["place"])
                # drifted away from the door
                a = self.goto(obs, self._source_point(item))
                self.stay()
                return a or Action.enter_place(src["place"])
            pend = set(self.pending(obs))
            seen = [e for e in obs.visible("object") if e.id in pend]
            dest = self._carry_dest(obs)
            if dest is not None:
                seen = [e for e in seen if self.items[e.id]["destination"] == dest]
            if seen:
                e = min(seen, key=lambda e: (e.distance, e.id))
                self.fsm.target = e.id
                self._goal = e.position
                self.go(2)
                return None
            self.stay()
            if self._scan >= 6:
                self._scan = 0
                return Action.move_forward(1.0)
            return self.scan()
        if s == 2:
            if obs.mode == INSIDE:
                self.go(3)
                return None
            vis = {e.id: e for e in obs.visible("object")}
            if self.fsm.target in vis:
                self._goal = vis[self.fsm.target].position
            a = self.nav.step_toward(obs, self._goal, REACH - 0.2)
            if a is None:
                self.go(3)
                return None
            self.stay()
            return a
        if s == 3:
            if None not in obs.held:
                self.go(4)
                return None
            t = self._target(obs)
            if t is None:
                self.go(4 if held else 1)
                return None
            self.stay()
            return Action.pick(t.id)
        if s == 4:
            dest = self._carry_dest(obs)
            if dest is None:  # dropped or lost on the way
                self.go(5)
                return None
            if obs.mode == INSIDE and obs.current_place == dest:
                self.go(5)
                return None
            if dest in obs.accessible_places and obs.mode != INSIDE:
                self.stay()
                return Action.enter_place(dest)
            a = self.goto(obs, self.world.access_point(dest))
            self.stay()
            return a or Action.enter_place(dest)
        if s == 5:
            if held:
                self.stay()
                o = held[0]
                if obs.mode == INSIDE and obs.current_place == self.items[o]["destination"]:
                    self.fsm.done.add(o)
                return Action.put(o, container="table" if obs.mode == INSIDE else None)
            if all(o in self.fsm.done for o in self.order):
                self.go(6)
                return None
            self.go(0)
            return None
        if s == 6:
            self.go(7)
            return Action.task_complete()
        return Action.wait()


def accepts(history: list[tuple[int, int]], edges=DELIVERY_EDGES, start: int = 0) -> bool:
    """True iff ``history`` is a connected walk over ``edges`` starting at ``start``."""
    cur = start
    for frm, to in history:
        if frm != cur or (frm, to) not in edges:
            return False
        cur = to
    return True


# --------------------------------------------------------------------------
# carry: 0 locate human, 1 reach object, 2 pick, 3 follow, 4 drop at home, 5 send complete, 6 finished

CARRY_EDGES = frozenset(
    {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 1), (2, 3), (3, 3), (3, 4), (4, 4), (4, 5), (5, 6)}
)
HR_BAND = (1.0, 5.0)


class CarryFSM(_Automaton):
    """Walks to the human, picks up their belongings, follows inside the band and drops them at the home door."""

    name = "heuristic"
    edges = CARRY_EDGES
    final = (6,)

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        self.objs = [st["obj"] for st in task.subtasks if st["type"] == "carry"]
        self.home = task.subtasks[0]["destination"]
        self.human_id = task.human["id"]
        self.human_last = world.access_point(task.human["start_place"])
        self.obj_last = {o["id"]: tuple(o["position"]) for o in task.objects if o.get("position")}

    def act(self, obs: Observation) -> Action:
        a = self.unstick(obs)
        if a is not None:
            return a
        for e in obs.visible("agent"):
            if e.id == self.human_id:
                self.human_last = e.position
        for e in obs.visible("object"):
            self.obj_last[e.id] = e.position
        for _ in range(6):
            a = self._dispatch(obs)
            if a is not None:
                return a
        return Action.wait()

    def _missing(self, obs):
        return [o for o in self.objs if o not in obs.held]

    def _dispatch(self, obs: Observation) -> Action | None:
        s = self.fsm.index
        pos = obs.pose[:2]
        if s == 0:
            a = self.goto(obs, self.human_last, 4.0)
            if a is None:
                self.go(1)
                return None
            self.stay()
            return a
        if s == 1:
            miss = self._missing(obs)
            if not miss:
                self.go(2)
                return None
            tgt = min(miss, key=lambda o: (dist(pos, self.obj_last[o]), o))
            a = self.nav.step_toward(obs, self.obj_last[tgt], REACH - 0.2)
            if a is None:
                self.go(2)
                return None
            self.stay()
            return a
        if s == 2:
            miss = self._missing(obs)
            if not miss:
                self.go(3)
                return None
            near = [e for e in obs.visible("object") if e.id in miss and e.distance <= REACH]
            if near:
                self.stay()
                return Action.pick(min(near, key=lambda e: (e.distance, e.id)).id)
            self.go(1)
            return self.scan()
        if s == 3:
            door = self.world.places[self.home].door
            human_seen = any(e.id == self.human_id for e in obs.visible("agent"))
            if dist(self.human_last, door) <= 6.0 and (dist(pos, door) <= 6.0 or not human_seen):
                self.go(4)
                return None
            d = dist(pos, self.human_last)
            self.stay()
            if d > 3.0:
                a = self.nav.step_toward(obs, self.human_last, 3.0)
                return a or Action.wait()
            if not human_seen:
                return self.scan()
            # inside the band: face the human and hold position
            bearing = math.atan2(self.human_last[1] - pos[1], self.human_last[0] - pos[0])
            turn = math.remainder(bearing - obs.pose[2], 2 * math.pi)
            return Action.turn(turn) if abs(turn) > math.radians(20) else Action.wait()
        if s == 4:
            held = [o for o in obs.held if o is not None]
            if not held:
                self.go(5)
                return None
            a = self.nav.step_toward(obs, self.world.access_point(self.home), 2.0)
            self.stay()
            return a or Action.put(held[0])
        if s == 5:
            self.go(6)
            return Action.task_complete()
        return Action.wait()


# --------------------------------------------------------------------------
# search: 0 goto region, 1 sweep, 2 approach object, 3 send complete, 4 finished, 5 failed

SEARCH_EDGES = frozenset({(0, 0), (0, 1), (0, 5), (1, 1), (1, 2), (1, 5), (2, 2), (2, 3), (3, 4)})
LANE_SPACING = 20.0


def sweep_waypoints(box, spacing: float = LANE_SPACING) -> list[tuple[float, float]]:
    """Boustrophedon lanes across an axis-aligned box, ``spacing`` apart."""
    x0, y0, x1, y1 = box
    n = max(1, int(math.ceil((y1 - y0) / spacing)))
    pts = []
    for k in range(n + 1):
        y = min(y0 + k * spacing, y1)
        row = [(x0, y), (x1, y)]
        pts += row if k % 2 == 0 else row[::-1]
    return pts


class SearchFSM(_Automaton):
    """Sweeps an outdoor box (or checks a room) until the object is seen, then closes in and reports."""

    name = "heuristic"
    edges = SEARCH_EDGES
    final = (4, 5)

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        st = next(s for s in task.subtasks if s["type"] == "search")
        self.obj = st["obj"]
        self.region = st["region"]
        self.waypoints: list = []
        if "box" in self.region:
            self.waypoints = [p for p in sweep_waypoints(self.region["box"]) if world.clearance(p, 2.0) >= 1.0]
        self._wp = 0
        self._ticks = 0
        self.seen_at = None

    def act(self, obs: Observation) -> Action:
        a = self.unstick(obs)
        if a is not None:
            return a
        for e in obs.visible("object"):
            if e.id == self.obj:
                self.seen_at = e.position
        for _ in range(4):
            a = self._dispatch(obs)
            if a is not None:
                return a
        return Action.wait()

    def _dispatch(self, obs: Observation) -> Action | None:
        s = self.fsm.index
        if s in (0, 1) and self.seen_at is not None:
            if s == 0:
                self.go(1)
            self.go(2)
            return None
        if s == 0:
            if "place" in self.region:
                pid = self.region["place"]
                if obs.mode == INSIDE and obs.current_place == pid:
                    # inside and nothing seen
                    self.go(5)
                    return Action.wait("not found")
                if pid in obs.accessible_places and obs.mode != INSIDE:
                    self.stay()
                    return Action.enter_place(pid)
                a = self.goto(obs, self.world.access_point(pid))
                self.stay()
                return a or Action.enter_place(pid)
            if not self.waypoints:
                self.go(5)
                return Action.wait("not found")
            a = self.goto(obs, self.waypoints[0], 3.0)
            if a is None:
                self.go(1)
                return None
            self.stay()
            return a
        if s == 1:
            if self._wp >= len(self.waypoints):
                self.go(5)
                return Action.wait("not found")
            wp = self.waypoints[self._wp]
            self._ticks += 1
            a = self.nav.step_toward(obs, wp, 3.0)
            if a is None or self._ticks > 200:
                self._wp += 1
                self._ticks = 0
                self.stay()
                return self.scan()
            self.stay()
            return a
        if s == 2:
            a = None
            if obs.mode != INSIDE:
                a = self.nav.step_toward(obs, self.seen_at, 4.0)
            if a is None:
                self.go(3)
                return None
            self.stay()
            return a
        if s == 3:
            self.go(4)
            return Action.task_complete()
        return Action.wait()


def heuristic_for(kind: str) -> _Automaton:
    return {"delivery": DeliveryFSM, "carry": CarryFSM, "search": SearchFSM}[kind]()
