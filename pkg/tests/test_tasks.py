import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commsim.planners.base import Planner, WaitPlanner
from commsim.planners.commute import CommutePlan, Leg
from commsim.planners.random_planner import RandomPlanner
from commsim.simcore import Action
from commsim.tasks import (
    OBJECT_TYPES,
    EpisodeResult,
    TaskSpec,
    conservation_report,
    eval_assistant,
    eval_commute,
    eval_influence,
    generate_assistant_task,
    generate_commute_episode,
    run_episode,
    validate_schedule,
)
from commsim.tasks.generate import GenerationError, commute_places, sample_outdoor_point
from commsim.tasks.runner import run_commute
from commsim.tasks.schedule import format_time, parse_time
from commsim.tasks.taskspec import CommuteRecord
from helpers import micro_delivery, street_world

# --- schedules --------------------------------------------------------------


def load(fixtures, name):
    return json.loads((fixtures / "schedules" / f"{name}.json").read_text())


@pytest.mark.parametrize("name", ["valid_workday", "valid_same_building", "valid_park_visit", "valid_minimal", "valid_shopping"])
def test_valid_fixtures(fixtures, world0, name):
    assert validate_schedule(load(fixtures, name), world0) == []


@pytest.mark.parametrize("name,code", [("invalid_gap", "gap"), ("invalid_overlap", "overlap"),
                                       ("invalid_missing_commute", "missing_commute"), ("invalid_unknown_place", "unknown_place")])
def test_invalid_fixtures(fixtures, world0, name, code):
    assert [v.code for v in validate_schedule(load(fixtures, name), world0)] == [code]


def _day(*acts):
    return [{"type": t, "activity": t, "place": p, "building": b, "start_time": s, "end_time": e} for t, p, b, s, e in acts]


def test_noon_gap_message(world0, fixtures):
    base = load(fixtures, "valid_minimal")
    home = next(a for a in base if a["type"] == "sleep")
    sched = _day(("sleep", home["place"], home["building"], "00:00:00", "11:59:59"),
                 ("sleep", home["place"], home["building"], "12:30:00", "23:59:59"))
    v = validate_schedule(sched, world0)
    assert [x.message for x in v] == ["gap at 12:00:00"]


def test_cafe_x_is_unknown(world0, fixtures):
    sched = load(fixtures, "valid_minimal")
    target = next(a for a in sched if a["type"] != "commute")
    target["place"], target["building"] = "Cafe X", None
    codes = {v.code for v in validate_schedule(sched, world0)}
    assert "unknown_place" in codes


def test_coverage_and_types():
    sched = _day(("sleep", "Home", None, "00:00:01", "23:59:58"))
    codes = {v.code for v in validate_schedule(sched)}
    assert codes == {"bad_start", "bad_end"}
    assert {v.code for v in validate_schedule(_day(("nap", "Home", None, "00:00:00", "23:59:59")))} == {"bad_type"}
    assert [v.code for v in validate_schedule([])] == ["empty"]


@given(st.integers(0, 24 * 3600 - 1))
def test_time_round_trip(t):
    assert parse_time(format_time(t)) == t


def test_bad_times():
    for bad in ("24:00:00", "12:60:00", "7:00:00", None):
        with pytest.raises(ValueError):
            parse_time(bad)


# --- generation ---------------------------------------------------------------


def test_assistant_generation_is_deterministic(world0):
    for kind in ("delivery", "search", "carry"):
        assert generate_assistant_task(world0, 11, kind).to_json() == generate_assistant_task(world0, 11, kind).to_json()
    assert generate_assistant_task(world0, 11, "delivery").to_json() != generate_assistant_task(world0, 12, "delivery").to_json()


def test_outdoor_points_avoid_footprints(world0):
    import numpy as np

    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = sample_outdoor_point(world0, rng)
        assert world0.building_at(p) is None


def test_delivery_has_three_subtasks(world0):
    t = generate_assistant_task(world0, 3, "delivery")
    assert len(t.subtasks) == 3 and all(s["type"] == "deliver" for s in t.subtasks)
    assert all(o["kind"] in OBJECT_TYPES for o in t.objects)
    for o in t.objects:
        if "container" in o:
            assert o["container"] in ("floor", "sofa", "table", "chair", "desk", "bed")
    assert all("bbox" in s for s in t.subtasks)


def test_task_json_round_trip(world0):
    t = generate_assistant_task(world0, 5, "carry")
    assert TaskSpec.from_dict(json.loads(t.to_json())) == t
    with pytest.raises(ValueError):
        TaskSpec("juggling", 0)


def test_generation_rejects_tiny_scene():
    with pytest.raises(GenerationError):
        generate_assistant_task(street_world(), 0, "delivery")
    with pytest.raises(ValueError):
        generate_assistant_task(street_world(), 0, "commute")


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_commute_episode_is_valid(world0, seed):
    t = generate_commute_episode(world0, seed)
    assert validate_schedule(t.schedule, world0) == []
    assert 4 <= commute_places(t) <= 8
    assert generate_commute_episode(world0, seed).to_json() == t.to_json()
    # every commute deadline is the start of the activity it leads to
    starts = {parse_time(a["start_time"]) for a in t.schedule}
    assert all(c["deadline"] in starts for c in t.commutes)


# --- runner -------------------------------------------------------------------


class Completer(Planner):
    name = "completer"

    def act(self, obs):
        return Action.task_complete()


def test_presatisfied_subtask_succeeds_fast():
    world, task = micro_delivery(1)
    task.objects[0] = {"id": "obj0", "kind": "box", "place": 0, "container": "table"}
    result, _ = run_episode(world, task, {"a0": Completer()})
    assert result.success == [True] and result.ticks < 5


def test_wait_only_times_out():
    world, task = micro_delivery(2)
    task.step_limit = 1500
    result, _ = run_episode(world, task, {"a0": WaitPlanner()})
    assert result.ticks == 1500 and result.success == [False, False]
    assert eval_assistant(result)["Ts"] == 1500.0


def test_rerun_is_identical(world0):
    task = generate_assistant_task(world0, 2, "delivery", step_limit=200)
    a, _ = run_episode(world0, task, {"a0": RandomPlanner(9)})
    b, _ = run_episode(world0, task, {"a0": RandomPlanner(9)})
    assert a.to_json() == b.to_json()


class Crasher(Planner):
    def act(self, obs):
        raise RuntimeError("boom")


def test_planner_exception_means_wait(caplog):
    world, task = micro_delivery(1)
    task.step_limit = 3
    result, state = run_episode(world, task, {"a0": Crasher()})
    assert result.ticks == 3 and state.agents["a0"].pos == (100.0, -8.0)
    assert "boom" in caplog.text


def test_unknown_binding_rejected():
    world, task = micro_delivery(1)
    with pytest.raises(ValueError):
        run_episode(world, task, {"a9": WaitPlanner()})


def _bus_commute_task():
    return TaskSpec("commute", 0, agents=[{"id": "a0", "pos": [185.0, -3.0], "cash": 20.0}],
                    subtasks=[{"type": "commute", "index": 0}],
                    commutes=[{"origin": 2, "destination": 0, "depart": 0, "deadline": 900}])


class FixedPlan:
    name = "fixed"

    def __init__(self, plan):
        self._plan = plan

    def plan(self, world, start, destination):
        return self._plan


def test_commute_price_matches_cash_ledger():
    world = street_world()
    plan = CommutePlan([Leg("walk", place=2), Leg("bus", place=1), Leg("walk", place=0)])
    result, state = run_commute(world, _bus_commute_task(), {"a0": FixedPlan(plan)})
    a = state.agents["a0"]
    assert result.success == [True]
    assert result.commutes[0].price == a.fares_paid + a.bike_paid == 20.0 - a.cash
    assert result.commutes[0].price > 0
    assert conservation_report(world, state, _bus_commute_task()) == {"bikes": True, "cash": True}


def test_bike_commute_conserves_bikes():
    world = street_world()
    task = TaskSpec("commute", 0, agents=[{"id": "a0", "pos": [25.0, -5.0], "cash": 20.0}],
                    subtasks=[{"type": "commute", "index": 0}],
                    commutes=[{"origin": 1, "destination": 2, "depart": 0, "deadline": 900}])
    plan = CommutePlan([Leg("walk", station=0), Leg("bike", station=1), Leg("walk", place=2)])
    result, state = run_commute(world, task, {"a0": FixedPlan(plan)})
    assert result.success == [True]
    assert state.transit.docks == {0: 2, 1: 1} and not state.transit.rented
    assert conservation_report(world, state, task) == {"bikes": True, "cash": True}
    assert result.commutes[0].price == 20.0 - state.agents["a0"].cash


# --- metrics ------------------------------------------------------------------


def _result(**kw):
    base = dict(kind="delivery", seed=0, planner="p", success=[], ticks=0)
    return EpisodeResult(**(base | kw))


def test_assistant_metrics():
    assert eval_assistant(_result(success=[True, False, True, False, True, False]))["SR"] == 50.0
    m = eval_assistant(_result(kind="carry", success=[True], ticks=1500, follow_frames=300, frames=1500, has_human=True))
    assert m["HR"] == 20.0 and m["Ts"] == 1500.0
    assert eval_assistant(_result(success=[True], follow_frames=10, frames=10))["HR"] == 0.0


def test_commute_metrics():
    one = CommuteRecord(0, 1, 0, 700, arrival=600, duration=600.0, price=0.0, walk_m=1200.0, late=False)
    m = eval_commute(_result(kind="commute", commutes=[one]))
    assert m == {"travel_time": 10.0, "travel_price": 0.0, "walk_km": 1.2, "late_rate": 0.0}
    late = CommuteRecord(1, 0, 800, 900, arrival=None, duration=4600.0, late=True)
    assert eval_commute(_result(kind="commute", commutes=[one, late]))["late_rate"] == 50.0
    with pytest.raises(ValueError):
        eval_commute(_result(kind="commute"))


def test_direct_walk_day_is_free(world0):
    from commsim.planners.commute import DirectWalkPlanner

    task = generate_commute_episode(world0, 7)
    task.commutes = task.commutes[:1]
    result, state = run_commute(world0, task, {"a0": DirectWalkPlanner()})
    assert eval_commute(result)["travel_price"] == 0.0
    assert state.agents["a0"].fares_paid == 0.0


def test_influence_metrics():
    members = [f"m{i}" for i in range(13)]
    rankings = {m: (["A", "B"] if i < 7 else ["B", "A"]) for i, m in enumerate(members)}
    a = eval_influence(rankings, {m: None for m in members}, "A")
    b = eval_influence(rankings, {m: None for m in members}, "B")
    assert a["win"] == pytest.approx(53.846, abs=1e-3)
    assert a["win"] + b["win"] == pytest.approx(100.0)
    conv = eval_influence({"x": ["A", "B"], "y": ["A", "B"]}, {"x": "B", "y": None}, "A")
    assert conv["conv"] == 100.0
    assert eval_influence({"x": ["A", "B"]}, {"x": "A"}, "A")["conv"] is None
    with pytest.raises(ValueError):
        eval_influence({"x": ["B"]}, {}, "A")
