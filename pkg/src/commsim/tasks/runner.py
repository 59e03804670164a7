"""Episode execution: build the world state from a task, drive planners, score subtasks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

from ..geometry import dist
from ..simcore import INSIDE, WALKING, Action, SimConfig, WorldState, add_agent, add_object, idle, init_state, sense, step
from .taskspec import HUMAN, CommuteRecord, EpisodeResult, TaskSpec

log = logging.getLogger(__name__)

DOOR_REGION = 5.0  # objects resting this close to a destination door count as delivered
SEARCH_RADIUS = 10.0
HR_BAND = (1.0, 5.0)
COMMUTE_GRACE = 3600  # seconds past the deadline before a commute is abandoned


def build_state(world, task: TaskSpec, config: SimConfig | None = None) -> WorldState:
    state = init_state(world, config, seed=task.seed)
    for a in task.agents:
        add_agent(state, a["id"], tuple(a["pos"]), a.get("heading", 0.0), a.get("cash", 0.0), a.get("place"))
    for o in task.objects:
        add_object(state, o["id"], o["kind"], o.get("position"), o.get("place"), o.get("container"))
    return state


@dataclass
class _Scorer:
    world: object
    task: TaskSpec
    success: list[bool] = field(default_factory=list)
    seen: set = field(default_factory=set)
    completed: bool = False

    def __post_init__(self):
        self.success = [False] * len(self.task.subtasks)

    def _resting_at(self, state: WorldState, obj: str, dest: int) -> bool:
        o = state.objects[obj]
        if o.holder is not None:
            return False
        if o.place is not None:
            return o.place == dest
        return o.position is not None and dist(o.position, self.world.places[dest].door) <= DOOR_REGION

    def update(self, state: WorldState, observations: Mapping) -> None:
        for i, st in enumerate(self.task.subtasks):
            if self.success[i]:
                continue  # flags are final once written
            if st["type"] in ("deliver", "carry"):
                self.success[i] = self._resting_at(state, st["obj"], st["destination"])
        for aid, obs in observations.items():
            if aid == HUMAN:
                continue
            for e in obs.visible("object"):
                self.seen.add((aid, e.id))
        for sig in state.signals:
            if sig["agent"] == HUMAN:
                continue
            for i, st in enumerate(self.task.subtasks):
                if st["type"] != "search" or self.success[i]:
                    continue
                if sig["subtask"] is not None and sig["subtask"] != i:
                    continue
                if (sig["agent"], st["obj"]) in self.seen and self._near(state, sig, st["obj"]):
                    self.success[i] = True
            if all(self.success):
                self.completed = True

    def _near(self, state, sig, obj) -> bool:
        o = state.objects[obj]
        if o.place is not None:
            return sig["place"] == o.place
        if o.position is None:
            return False
        return sig["place"] is None and dist(sig["position"], o.position) <= SEARCH_RADIUS


def _safe_act(planner, obs) -> Action:
    try:
        a = planner.act(obs)
        return a if isinstance(a, Action) else Action.wait("planner error")
    except Exception as exc:  # a broken planner must not end the episode
        log.warning("planner %s raised %s: %s", getattr(planner, "name", "?"), type(exc).__name__, exc)
        return Action.wait("planner error")


def run_episode(
    world,
    task: TaskSpec,
    bindings: Mapping[str, object],
    step_limit: int | None = None,
    config: SimConfig | None = None,
    planner_name: str | None = None,
) -> tuple[EpisodeResult, WorldState]:
    """Run one episode to completion and score it.

    ``bindings`` maps controlled agent ids to planners; the carry task's
    human is bound to a scripted avatar automatically.  Commute tasks take a
    commute planner (anything with ``plan(world, start, destination)``) or a
    per-tick planner for the main agent.
    """
    if task.kind == "commute":
        return run_commute(world, task, bindings, config, planner_name)
    limit = task.step_limit if step_limit is None else int(step_limit)
    state = build_state(world, task, config)
    planners = dict(bindings)
    if task.human is not None and HUMAN not in planners:
        from ..planners.human import HumanAvatar

        planners[HUMAN] = HumanAvatar()
    for aid in sorted(planners):
        if aid not in state.agents:
            raise ValueError(f"binding for unknown agent {aid!r}")
        planners[aid].reset(aid, task, world)
    controlled = [a for a in sorted(planners) if a != HUMAN]
    name = planner_name or getattr(planners[controlled[0]], "name", "planner")
    scorer = _Scorer(world, task)
    obs = {aid: sense(state, world, aid) for aid in sorted(planners)}
    follow = frames = 0
    ticks = limit
    for t in range(limit):
        actions = {aid: _safe_act(planners[aid], obs[aid]) for aid in sorted(planners)}
        _, obs = step(state, world, actions, observe=sorted(planners))
        scorer.update(state, obs)
        if task.human is not None:
            frames += 1
            h = state.agents[HUMAN]
            for aid in controlled:
                a = state.agents[aid]
                if a.outdoors and h.outdoors and HR_BAND[0] <= dist(a.pos, h.pos) <= HR_BAND[1]:
                    follow += 1
                    break
        if all(scorer.success) and any(s["agent"] != HUMAN for s in state.signals):
            scorer.completed = True
        if scorer.completed:
            ticks = t + 1
            break
        if all(getattr(planners[a], "terminal", False) for a in controlled):
            break  # nothing more will happen; unresolved subtasks stay failed
    for p in planners.values():
        p.close()
    result = EpisodeResult(
        kind=task.kind,
        seed=task.seed,
        planner=name,
        success=list(scorer.success),
        ticks=ticks if scorer.completed else limit,
        step_limit=limit,
        follow_frames=follow,
        frames=frames,
        has_human=task.human is not None,
        cash_spent=sum(a["cash"] for a in task.agents if a["id"] != HUMAN) - sum(state.agents[a].cash for a in controlled),
        digest=state.digest,
    )
    return result, state


# --------------------------------------------------------------------------
# commute


def run_commute(world, task: TaskSpec, bindings: Mapping[str, object], config=None, planner_name=None):
    from ..planners.commute import CommuteExecutor

    aid = task.controlled[0]
    binding = bindings[aid]
    name = planner_name or getattr(binding, "name", "planner")
    state = build_state(world, task, config)
    agent = state.agents[aid]
    records: list[CommuteRecord] = []
    for c in task.commutes:
        if agent.status.kind == "ongoing":
            step(state, world, {aid: Action.wait()}, observe=())
        if state.sim_time < c["depart"]:
            idle(state, world, c["depart"] - state.sim_time)
        t0, cash0, walk0 = state.sim_time, agent.cash, agent.walked
        dest = c["destination"]
        if hasattr(binding, "plan"):
            try:
                plan = binding.plan(world, agent.pos, dest)
            except Exception as exc:
                log.warning("commute planner failed: %s", exc)
                from ..planners.commute import direct_walk_plan

                plan = direct_walk_plan(agent.pos, dest)
            planner = CommuteExecutor(world, plan)
            planner.reset(aid, task, world)
        else:
            planner = binding
            planner.reset(aid, task, world)
        rec = CommuteRecord(c["origin"], dest, t0, c["deadline"])
        cap = c["deadline"] + COMMUTE_GRACE
        obs = sense(state, world, aid)
        while state.sim_time < cap:
            if agent.mode == INSIDE and agent.place == dest and state.sim_time > t0:
                break
            _, o = step(state, world, {aid: _safe_act(planner, obs)}, observe=[aid])
            obs = o[aid]
        arrived = agent.mode == INSIDE and agent.place == dest
        rec.arrival = state.sim_time if arrived else None
        rec.duration = float(state.sim_time - t0)
        rec.price = cash0 - agent.cash
        rec.walk_m = agent.walked - walk0
        rec.late = (not arrived) or state.sim_time > c["deadline"]
        records.append(rec)
        if agent.mode != INSIDE and agent.mode != WALKING:
            log.warning("commute %d ended in mode %s", len(records) - 1, agent.mode)
    start_cash = task.agents[0]["cash"]
    result = EpisodeResult(
        kind="commute",
        seed=task.seed,
        planner=name,
        success=[r.arrival is not None for r in records],
        ticks=state.sim_time,
        step_limit=task.step_limit,
        commutes=records,
        cash_spent=start_cash - agent.cash,
        digest=state.digest,
    )
    return result, state


def conservation_report(world, state: WorldState, task: TaskSpec | None = None) -> dict[str, bool]:
    """Bike-total and cash-ledger identities for a finished (or running) state."""
    total0 = sum(s.initial_count for s in world.stations.values())
    bikes = state.transit.total_bikes == total0
    cash = True
    if task is not None:
        for a in task.agents:
            s = state.agents[a["id"]]
            # fares and bike fees are multiples of binary fractions, so equality is exact
            cash &= a.get("cash", 0.0) - s.cash == s.fares_paid + s.bike_paid
    return {"bikes": bikes, "cash": cash}
