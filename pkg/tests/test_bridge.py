import json
import shlex
import sys

import jsonschema
import pytest

from commsim.planners import make_planner
from commsim.planners.bridge import BAD_PLAN_REASON, TIMEOUT_REASON, ExternalPlanner, protocol_schema
from commsim.planners.commute import Leg
from commsim.simcore import sense
from commsim.tasks.runner import build_state, run_commute, run_episode
from commsim.tasks.taskspec import TaskSpec
from helpers import micro_delivery, street_world


def cmd(stubs, name, *args) -> str:
    return " ".join(shlex.quote(str(a)) for a in (sys.executable, stubs / name, *args))


@pytest.fixture
def scene():
    return micro_delivery(1)


def first_obs(world, task):
    state = build_state(world, task)
    return sense(state, world, "a0")


def test_schema_accepts_the_three_reply_shapes():
    v = jsonschema.Draft202012Validator(protocol_schema())
    v.validate({"action": {"kind": "wait"}})
    v.validate({"plan": [{"kind": "goto", "point": [1, 2]}, {"kind": "pick", "obj": "x"}]})
    v.validate({"commute_plan": [{"goal_place": "Shop", "transit_type": "walk"}]})
    with pytest.raises(jsonschema.ValidationError):
        v.validate({"action": {"kind": "wait"}, "plan": [{"kind": "wait"}]})
    with pytest.raises(jsonschema.ValidationError):
        v.validate({"plan": [{"kind": "goto"}]})


def test_echo_stub_wait(stubs, scene):
    world, task = scene
    p = ExternalPlanner(cmd(stubs, "echo_wait.py"), timeout=10)
    p.reset("a0", task, world)
    try:
        a = p.act(first_obs(world, task))
    finally:
        p.close()
    assert a.kind == "wait" and not p.failures


def test_malformed_reply_is_bad_plan(stubs, scene):
    world, task = scene
    p = ExternalPlanner(cmd(stubs, "malformed.py"), timeout=10)
    p.reset("a0", task, world)
    obs = first_obs(world, task)
    try:
        not_json = p.act(obs)
        bad_kind = p.act(obs)
    finally:
        p.close()
    assert not_json.kind == "wait" and not_json.reason == BAD_PLAN_REASON
    assert bad_kind.reason == BAD_PLAN_REASON
    assert p.failures == [BAD_PLAN_REASON, BAD_PLAN_REASON]


def test_timeout_gives_wait(stubs, scene):
    world, task = scene
    p = ExternalPlanner(cmd(stubs, "sleeper.py", 3), timeout=0.3)
    p.reset("a0", task, world)
    try:
        a = p.act(first_obs(world, task))
    finally:
        p.close()
    assert a.kind == "wait" and a.reason == TIMEOUT_REASON


def test_request_carries_context(tmp_path, scene):
    world, task = scene
    log = tmp_path / "req.jsonl"
    script = tmp_path / "tee.py"
    script.write_text(
        "import json, sys\n"
        f"out = open({str(log)!r}, 'a')\n"
        "for line in sys.stdin:\n"
        "    out.write(line); out.flush()\n"
        "    print(json.dumps({'action': {'kind': 'turn', 'angle': 0.5}}), flush=True)\n"
    )
    p = ExternalPlanner(f"{sys.executable} {script}", timeout=10)
    p.reset("a0", task, world)
    try:
        obs = first_obs(world, task)
        p.act(obs)
        p.act(obs)
    finally:
        p.close()
    reqs = [json.loads(l) for l in log.read_text().splitlines()]
    assert [set(r) for r in reqs] == [{"tick", "agent_id", "observation", "tasks", "history"}] * 2
    assert reqs[0]["agent_id"] == "a0" and reqs[0]["tasks"] == task.subtasks
    assert reqs[0]["history"] == [] and reqs[1]["history"] == [{"kind": "turn", "angle": 0.5}]


def test_scripted_subplan_completes_delivery(stubs, scene):
    world, task = scene
    planner = make_planner("exec:" + cmd(stubs, "scripted_delivery.py"), "delivery", timeout=10)
    result, state = run_episode(world, task, {"a0": planner})
    assert result.success == [True]
    assert result.ticks < task.step_limit
    kinds = [h["kind"] for h in planner.history]
    # recorded order: walk, pick, walk, enter, put, leave, report
    picks, enters, puts = kinds.index("pick"), kinds.index("enter_place"), kinds.index("put")
    assert picks < enters < puts < kinds.index("task_complete")
    assert state.objects["obj0"].place == 0


def test_broken_planner_does_not_stop_episode(stubs, scene):
    world, task = scene
    task.step_limit = 5
    result, _ = run_episode(world, task, {"a0": make_planner("exec:" + cmd(stubs, "malformed.py"), "delivery")})
    assert result.ticks == 5 and result.success == [False]


def commute_task(world):
    return TaskSpec("commute", 0, agents=[{"id": "a0", "pos": [180.0, -3.0], "cash": 20.0}],
                    subtasks=[{"type": "commute", "index": 0}],
                    commutes=[{"origin": 2, "destination": 0, "depart": 0, "deadline": 600}])


def test_external_commute_plan(stubs):
    world = street_world()
    p = ExternalPlanner(cmd(stubs, "commute_walk.py"), timeout=10)
    try:
        plan = p.plan(world, (180.0, -3.0), 0)
    finally:
        p.close()
    assert plan.legs == [Leg("walk", place=0)]


def test_external_commute_falls_back_to_walking(stubs, caplog):
    world = street_world()
    p = ExternalPlanner(cmd(stubs, "malformed.py"), timeout=10)
    try:
        plan = p.plan(world, (180.0, -3.0), 0)
    finally:
        p.close()
    assert plan.legs == [Leg("walk", place=0)]
    assert BAD_PLAN_REASON in caplog.text


def test_external_commute_episode_arrives(stubs):
    world = street_world()
    p = ExternalPlanner(cmd(stubs, "commute_walk.py"), timeout=10)
    try:
        result, _ = run_commute(world, commute_task(world), {"a0": p})
    finally:
        p.close()
    assert result.success == [True] and result.commutes[0].price == 0.0
