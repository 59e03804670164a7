"""Task generation, schedule validation, episode running and metrics."""

from __future__ import annotations

from .generate import OBJECT_TYPES, generate_assistant_task, generate_commute_episode
from .metrics import eval_assistant, eval_commute, eval_influence
from .runner import conservation_report, run_episode
from .schedule import Violation, validate_schedule
from .taskspec import EpisodeResult, TaskSpec

__all__ = [
    "OBJECT_TYPES",
    "EpisodeResult",
    "TaskSpec",
    "Violation",
    "conservation_report",
    "eval_assistant",
    "eval_commute",
    "eval_influence",
    "generate_assistant_task",
    "generate_commute_episode",
    "run_episode",
    "validate_schedule",
]
