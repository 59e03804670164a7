"""Scripted human avatar for the carry task: waits for a helper, then walks home along the roads."""

from __future__ import annotations

import math

from ..geometry import dist
from ..simcore import INSIDE, Action, Observation
from .base import Dodger, Planner

TURN_TOL = math.radians(5)


class HumanAvatar(Planner):
    """Waits at its start until a helper comes within ``trigger`` metres (or ``delay`` ticks pass),
    then walks the road route home at ``speed`` m/s and goes inside."""

    name = "human"

    def __init__(self, speed: float = 1.0, trigger: float = 3.0):
        self.speed = speed
        self.trigger = trigger

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        h = task.human
        self.home = h["home"]
        self.delay = int(h.get("delay", 600))
        start = world.access_point(h["start_place"])
        goal = world.access_point(self.home)
        try:
            mid = world.roads.path(start, goal)
        except Exception:
            mid = []
        self.route = [start] + [tuple(p) for p in mid] + [goal]
        self.k = 1
        self.started = False
        self.home_reached = False
        self._since = 0
        self._dodger = Dodger(patience=2)

    @property
    def terminal(self) -> bool:
        return self.home_reached

    def act(self, obs: Observation) -> Action:
        if obs.mode == INSIDE:
            self.home_reached = True
            return Action.wait()
        if not self.started:
            self._since += 1
            near = any(e.kind == "agent" and e.distance <= self.trigger for e in obs.visible_entities)
            if near or self._since >= self.delay:
                self.started = True
            elif self._since % 5 == 0:
                return Action.turn(math.pi / 2)  # look around for the helper
            else:
                return Action.wait()
        a = self._dodger(obs)
        if a is not None:
            return a
        pos = obs.pose[:2]
        while self.k < len(self.route) and dist(pos, self.route[self.k]) < 0.5:
            self.k += 1
        if self.k >= len(self.route):
            if self.home in obs.accessible_places:
                return Action.enter_place(self.home)
            return Action.wait()
        wp = self.route[self.k]
        bearing = math.atan2(wp[1] - pos[1], wp[0] - pos[0])
        err = math.remainder(bearing - obs.pose[2], 2 * math.pi)
        if abs(err) > TURN_TOL:
            return Action.turn(err)
        return Action.move_forward(min(self.speed, dist(pos, wp)))
