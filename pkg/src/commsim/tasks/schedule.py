"""Daily schedules: parsing, formatting and grounding validation."""

from __future__ import annotations

import re
from dataclasses import dataclass

ACTIVITY_TYPES = ("commute", "meal", "sleep", "main")
DAY_START = 0
DAY_END = 24 * 3600 - 1
_TIME = re.compile(r"^(\d{2}):(\d{2}):(\d{2})$")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    index: int | None = None

    def __str__(self) -> str:
        return self.message if self.index is None else f"[{self.index}] {self.message}"


def parse_time(text: str) -> int:
    """'HH:MM:SS' -> seconds since midnight."""
    m = _TIME.match(text) if isinstance(text, str) else None
    if not m:
        raise ValueError(f"bad time {text!r}")
    h, mi, s = map(int, m.groups())
    if h > 23 or mi > 59 or s > 59:
        raise ValueError(f"bad time {text!r}")
    return h * 3600 + mi * 60 + s


def format_time(seconds: int) -> str:
    if not 0 <= seconds <= DAY_END:
        raise ValueError(f"time {seconds} outside the day")
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


def _abuts(prev_end: int, start: int) -> bool:
    # either "08:00:00 -> 08:00:00" or "07:59:59 -> 08:00:00" style
    return start == prev_end or start == prev_end + 1


def validate_schedule(schedule: list[dict], world=None) -> list[Violation]:
    """All violations found in ``schedule``; an empty list means it is valid.

    Checks well-formed entries, coverage of the whole day, abutment of
    consecutive activities, that a commute separates consecutive activities
    in different buildings, and (with ``world``) that places and buildings
    exist and agree with each other.
    """
    out: list[Violation] = []
    if not schedule:
        return [Violation("empty", "schedule is empty")]
    spans: list[tuple[int, int] | None] = []
    for i, act in enumerate(schedule):
        typ = act.get("type")
        if typ not in ACTIVITY_TYPES:
            out.append(Violation("bad_type", f"unknown activity type {typ!r}", i))
        try:
            s, e = parse_time(act.get("start_time")), parse_time(act.get("end_time"))
        except ValueError as exc:
            out.append(Violation("bad_time", str(exc), i))
            spans.append(None)
            continue
        if e < s:
            out.append(Violation("bad_interval", f"ends before it starts ({act['start_time']} > {act['end_time']})", i))
        spans.append((s, e))
        if typ == "commute":
            if act.get("place") is not None or act.get("building") is not None:
                out.append(Violation("bad_commute", "commute must have null place and building", i))
        elif typ in ACTIVITY_TYPES:
            if act.get("place") is None:
                out.append(Violation("missing_place", "activity has no place", i))
            elif world is not None:
                place = world.place_by_name.get(act["place"])
                if place is None:
                    out.append(Violation("unknown_place", f"unknown place {act['place']!r}", i))
                else:
                    bname = act.get("building")
                    if bname is not None and bname not in world.building_by_name:
                        out.append(Violation("unknown_building", f"unknown building {bname!r}", i))
                    elif _building_name(world, place) != bname:
                        out.append(Violation("building_mismatch", f"place {act['place']!r} is not in building {bname!r}", i))
    if spans[0] is not None and spans[0][0] != DAY_START:
        out.append(Violation("bad_start", "schedule must start at 00:00:00", 0))
    if spans[-1] is not None and spans[-1][1] != DAY_END:
        out.append(Violation("bad_end", "schedule must end at 23:59:59", len(schedule) - 1))
    for i in range(1, len(schedule)):
        a, b = spans[i - 1], spans[i]
        if a is None or b is None:
            continue
        if b[0] > a[1] + 1:
            out.append(Violation("gap", f"gap at {format_time(min(a[1] + 1, DAY_END) if a[1] % 60 == 59 else a[1])}", i))
        elif not _abuts(a[1], b[0]):
            out.append(Violation("overlap", f"overlap at {format_time(b[0])}", i))
    # commute insertion rule
    prev = None
    for i, act in enumerate(schedule):
        if act.get("type") == "commute":
            prev = None
            continue
        if act.get("type") not in ACTIVITY_TYPES:
            continue
        loc = _location_key(act)
        if prev is not None and prev[1] != loc:
            out.append(Violation("missing_commute", f"no commute between activities {prev[0]} and {i} in different buildings", i))
        prev = (i, loc)
    return out


def _building_name(world, place) -> str | None:
    if place.building is None:
        return None
    return world.buildings[place.building].name or None


def _location_key(act: dict):
    # activities at open-air places have no building; the place itself stands in
    return act.get("building") or ("place", act.get("place"))


def activity_windows(schedule: list[dict]) -> list[tuple[int, int, dict]]:
    return [(parse_time(a["start_time"]), parse_time(a["end_time"]), a) for a in schedule]
