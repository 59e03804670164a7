"""Episode scoring."""

from __future__ import annotations

from typing import Mapping, Sequence

from .taskspec import EpisodeResult


def eval_assistant(result: EpisodeResult) -> dict[str, float]:
    """SR and HR in percent, Ts in ticks. HR is 0.0 when the task has no human to follow."""
    n = len(result.success)
    sr = 100.0 * sum(result.success) / n if n else 0.0
    hr = 100.0 * result.follow_frames / result.frames if result.has_human and result.frames else 0.0
    return {"SR": sr, "Ts": float(result.ticks), "HR": hr}


def eval_commute(result: EpisodeResult) -> dict[str, float]:
    """Travel time (min) and price summed over the day, walk distance (km) over the day, late rate (%)."""
    cs = result.commutes
    if not cs:
        raise ValueError("episode has no commutes")
    return {
        "travel_time": sum(c.duration for c in cs) / 60.0,
        "travel_price": sum(c.price for c in cs),
        "walk_km": sum(c.walk_m for c in cs) / 1000.0,
        "late_rate": 100.0 * sum(1 for c in cs if c.late) / len(cs),
    }


def eval_influence(rankings: Mapping[str, Sequence[str]], initial_support: Mapping[str, str | None], agent: str) -> dict:
    """Friendship-ranking wins and conversion of initially non-supporting members for one main agent.

    ``rankings`` maps each member to its ranking of the main agents (best
    first); ``initial_support`` maps members to the main agent they
    supported before the day (or None).
    """
    if not rankings:
        raise ValueError("no members")
    members = sorted(rankings)
    for m in members:
        if agent not in rankings[m]:
            raise ValueError(f"member {m} does not rank {agent}")
    wins = [m for m in members if rankings[m][0] == agent]
    non = [m for m in members if initial_support.get(m) != agent]
    conv = None
    if non:
        conv = 100.0 * sum(1 for m in non if rankings[m][0] == agent) / len(non)
    return {"win": 100.0 * len(wins) / len(members), "conv": conv}
