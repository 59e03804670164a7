"""Baseline planners and the registry the runner and CLI resolve names through."""

from __future__ import annotations

from .base import Planner, WaitPlanner
from .commute import CommuteExecutor, CommutePlan, DirectWalkPlanner, Leg, MctsCommutePlanner, direct_walk_plan, mcts_plan
from .fsm import CarryFSM, DeliveryFSM, SearchFSM, heuristic_for
from .random_planner import RandomPlanner, random_planner

PLANNER_NAMES = ("random", "heuristic", "wait", "direct", "mcts")


class UnknownPlanner(ValueError):
    pass


def make_planner(spec: str, kind: str, seed: int = 0, timeout: float | None = None):
    """Resolve a planner spec for a task kind.

    ``spec`` is one of PLANNER_NAMES or ``exec:COMMAND`` for an external
    process.  Commute tasks get plan factories; assistant tasks get per-tick
    planners.
    """
    if spec.startswith("exec:"):
        from .bridge import DEFAULT_TIMEOUT, ExternalPlanner

        cmd = spec[5:].strip()
        if not cmd:
            raise UnknownPlanner("exec: needs a command")
        return ExternalPlanner(cmd, DEFAULT_TIMEOUT if timeout is None else timeout)
    if spec == "random":
        return RandomPlanner(seed)
    if spec == "wait":
        return WaitPlanner()
    if kind == "commute":
        if spec in ("direct", "heuristic"):
            return DirectWalkPlanner()
        if spec == "mcts":
            return MctsCommutePlanner(seed=seed)
    else:
        if spec == "heuristic":
            return heuristic_for(kind)
    raise UnknownPlanner(f"planner {spec!r} is not available for {kind} tasks")


__all__ = [
    "CarryFSM",
    "CommuteExecutor",
    "CommutePlan",
    "DeliveryFSM",
    "DirectWalkPlanner",
    "Leg",
    "MctsCommutePlanner",
    "Planner",
    "RandomPlanner",
    "SearchFSM",
    "UnknownPlanner",
    "WaitPlanner",
    "direct_walk_plan",
    "heuristic_for",
    "make_planner",
    "mcts_plan",
    "random_planner",
]
