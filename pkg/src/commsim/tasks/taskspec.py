"""Task and result records shared by generators, planners, the runner and the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

TASK_SCHEMA = "commsim.task/1"
RESULT_SCHEMA = "commsim.result/1"
KINDS = ("carry", "delivery", "search", "commute")
ASSISTANT_KINDS = ("carry", "delivery", "search")
MAIN_AGENT = "a0"
HUMAN = "human"


@dataclass
class TaskSpec:
    """Everything needed to set up and score one episode.

    ``agents`` holds setup dicts (id, pos, heading, cash, place).  Subtasks
    are plain dicts with a ``type`` key:

    * deliver: obj, source {"place"} or {"point"}, destination place, bbox
    * carry:   obj, human, destination place, bbox
    * search:  obj, region {"box"} or {"place"}, bbox
    * commute: index into ``commutes``
    """

    kind: str
    seed: int
    scene: str = ""
    agents: list[dict] = field(default_factory=list)
    objects: list[dict] = field(default_factory=list)
    subtasks: list[dict] = field(default_factory=list)
    human: dict | None = None  # id, home, start_place, delay
    schedule: list[dict] | None = None
    commutes: list[dict] = field(default_factory=list)  # origin, destination, depart, deadline
    step_limit: int = 1500

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")

    def check(self, world) -> None:
        if not self.subtasks:
            raise ValueError("task has no subtasks")
        for st in self.subtasks:
            for key in ("destination",):
                if key in st and st[key] not in world.places:
                    raise ValueError(f"unknown place {st[key]}")
            for d in (st.get("source"), st.get("region")):
                if d and "place" in d and d["place"] not in world.places:
                    raise ValueError(f"unknown place {d['place']}")
        for c in self.commutes:
            for key in ("origin", "destination"):
                if c[key] not in world.places:
                    raise ValueError(f"unknown place {c[key]}")

    @property
    def controlled(self) -> list[str]:
        return [a["id"] for a in self.agents if a["id"] != HUMAN]

    def to_dict(self) -> dict:
        return {"schema": TASK_SCHEMA} | asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        if d.pop("schema", TASK_SCHEMA) != TASK_SCHEMA:
            raise ValueError("unsupported task schema")
        return cls(**d)


@dataclass
class CommuteRecord:
    origin: int
    destination: int
    depart: int
    deadline: int
    arrival: int | None = None
    duration: float = 0.0
    price: float = 0.0
    walk_m: float = 0.0
    late: bool = True


@dataclass
class EpisodeResult:
    kind: str
    seed: int
    planner: str
    success: list[bool]
    ticks: int
    step_limit: int = 1500
    follow_frames: int = 0
    frames: int = 0
    has_human: bool = False
    commutes: list[CommuteRecord] = field(default_factory=list)
    cash_spent: float = 0.0
    digest: str = ""
    trace_path: str | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"schema": RESULT_SCHEMA} | asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        d = dict(d)
        if d.pop("schema", None) != RESULT_SCHEMA:
            raise ValueError("unsupported result schema")
        d["commutes"] = [CommuteRecord(**c) for c in d.get("commutes", [])]
        return cls(**d)
