"""Shaped reward for reinforcement-learning commute agents (no training loop here)."""

from __future__ import annotations

from dataclasses import dataclass

GOAL_BONUS = 1000.0
WALK_PENALTY = 1.0
CASH_PENALTY = 1.0
ACTION_PENALTY = 0.1


@dataclass(frozen=True)
class Transition:
    goals_reached: int = 0
    d0: float = 0.0  # distance to goal before the step
    dt: float = 0.0  # distance to goal after the step
    walked: bool = False
    cash_spent: float = 0.0
    acted: bool = False


def rl_reward(t: Transition) -> float:
    return (
        GOAL_BONUS * t.goals_reached
        + (t.d0 - t.dt)
        - WALK_PENALTY * (1 if t.walked else 0)
        - CASH_PENALTY * t.cash_spent
        - ACTION_PENALTY * (1 if t.acted else 0)
    )


def transition_from_states(before, after, goal, reached: bool, acted: bool) -> Transition:
    """Build a transition from two agent snapshots (AgentState-like: x, y, walked, cash)."""
    from ..geometry import dist

    return Transition(
        goals_reached=1 if reached else 0,
        d0=dist((before.x, before.y), goal),
        dt=dist((after.x, after.y), goal),
        walked=after.walked > before.walked,
        cash_spent=max(0.0, before.cash - after.cash),
        acted=acted,
    )
