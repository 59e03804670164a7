"""Common planner interface."""

from __future__ import annotations

import math

from ..simcore import RIDING, WALKING, Action, Observation


class Planner:
    """One agent's decision maker. ``act`` is called once per tick with that tick's observation."""

    name = "planner"

    def reset(self, agent_id: str, task=None, world=None) -> None:
        self.agent_id = agent_id
        self.task = task
        self.world = world

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError

    @property
    def terminal(self) -> bool:
        """True once the planner will only ever wait."""
        return False

    def close(self) -> None:
        pass


class WaitPlanner(Planner):
    name = "wait"

    def act(self, obs: Observation) -> Action:
        return Action.wait()


class Dodger:
    """Gets an agent out of a mutual block: after ``patience`` blocked moves in a row it
    sidesteps, trying left, then right, then back on successive blocks."""

    TURNS = (math.pi / 2, math.pi, math.pi / 2)

    def __init__(self, patience: int = 3, step: float = 1.0):
        self.patience = patience
        self.step = step
        self.blocked = 0
        self.k = 0
        self.pending = False

    def __call__(self, obs: Observation) -> Action | None:
        st = obs.action_status
        if st.kind == "failed" and st.reason == "blocked":
            self.blocked += 1
        elif not self.pending:
            self.blocked = 0
        if self.pending:
            self.pending = False
            return Action.move_forward(self.step)
        if self.blocked >= self.patience and obs.mode in (WALKING, RIDING):
            self.blocked = 0
            self.pending = True
            turn = self.TURNS[self.k % len(self.TURNS)]
            self.k += 1
            return Action.turn(turn)
        return None
