"""Uniform choice over the high-level actions that are legal right now."""

from __future__ import annotations

import math
import zlib

import numpy as np

from ..simcore import INSIDE, ON_BUS, RIDING, WALKING, Action, Observation
from .base import Planner

REACH = 1.5
INTERACT = 5.0
STEP = 2.0
TURNS = (math.pi / 4, -math.pi / 4, math.pi / 2, -math.pi / 2)


def legal_actions(obs: Observation, reach: float = REACH, interact: float = INTERACT) -> list[Action]:
    """Action variants that the simulator would accept from this observation."""
    out = [Action.wait()]
    mode = obs.mode
    if mode in (WALKING, RIDING):
        out.append(Action.move_forward(STEP if mode == WALKING else 5.0))
        out += [Action.turn(a) for a in TURNS]
    if mode == WALKING:
        for e in obs.visible("bus"):
            if e.distance <= interact:
                out.append(Action.enter_bus(e.id))
        for e in obs.visible("station"):
            if e.distance <= interact:
                out.append(Action.enter_bike(e.id))
        out += [Action.enter_place(p) for p in obs.accessible_places]
    if mode == RIDING:
        for e in obs.visible("station"):
            if e.distance <= interact:
                out.append(Action.exit_bike(e.id))
    if mode == ON_BUS and obs.bus_stop is not None:
        out.append(Action.exit_bus())
    if mode == INSIDE:
        out.append(Action.exit_place())
    if mode in (WALKING, INSIDE):
        if None in obs.held:
            for e in obs.visible("object"):
                if mode == INSIDE or e.distance <= reach:
                    out.append(Action.pick(e.id))
        for o in obs.held:
            if o is not None:
                out.append(Action.put(o))
    out.append(Action.communicate("hello"))
    out.append(Action.task_complete())
    # dedupe while keeping order (several buses of one line give one variant)
    seen, uniq = set(), []
    for a in out:
        k = repr(a)
        if k not in seen:
            seen.add(k)
            uniq.append(a)
    return uniq


def random_planner(obs: Observation, seed: int) -> Action:
    """Deterministic in (seed, agent, tick)."""
    options = legal_actions(obs)
    rng = np.random.default_rng([int(seed), zlib.crc32(obs.agent_id.encode()), int(obs.sim_time)])
    return options[int(rng.integers(len(options)))]


class RandomPlanner(Planner):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def act(self, obs: Observation) -> Action:
        return random_planner(obs, self.seed)
