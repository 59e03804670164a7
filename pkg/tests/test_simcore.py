import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commsim.simcore import (
    INSIDE,
    ON_BUS,
    RIDING,
    Action,
    SimConfig,
    SimError,
    WorldState,
    add_agent,
    add_object,
    advance_buses,
    apply_motion,
    bike_price,
    board_bus,
    idle,
    init_state,
    pick,
    put,
    rent_bike,
    return_bike,
    sense,
    step,
)
from helpers import box, street_world, tiny_world

NORTH, EAST = math.pi / 2, 0.0


@pytest.fixture
def world():
    return street_world()


def fresh(world, **agents):
    s = init_state(world, seed=1)
    for aid, (pos, heading, cash) in agents.items():
        add_agent(s, aid, pos, heading, cash)
    return s


def test_all_wait_advances_time_and_buses(world):
    s = fresh(world, a=((100, -10), EAST, 5))
    before = (s.agents["a"].pos, s.transit.buses[0].arc, s.transit.buses[0].dwell)
    step(s, world, {"a": Action.wait()})
    assert s.sim_time == 1
    assert s.agents["a"].pos == before[0]
    assert s.transit.buses[0].dwell == before[2] - 1


def test_walk_two_metres(world):
    s = fresh(world, a=((100, -10), EAST, 0))
    step(s, world, {"a": Action.move_forward(2)})
    assert s.agents["a"].pos == pytest.approx((102, -10), abs=1e-12)


def test_long_move_is_capped_and_continues(world):
    s = fresh(world, a=((100, -10), EAST, 0))
    _, obs = step(s, world, {"a": Action.move_forward(10)})
    a = s.agents["a"]
    assert a.x == pytest.approx(102)
    assert obs["a"].action_status.kind == "ongoing"
    assert obs["a"].action_status.remaining == pytest.approx(8)
    for _ in range(4):
        step(s, world, {})
    assert a.x == pytest.approx(110) and a.status.kind == "idle"


def test_wall_stops_motion(world):
    # disc edge 1 m short of the footprint at y = 10
    s = fresh(world, a=((50, 8.7), NORTH, 0))
    moved, blocked = apply_motion(s, world, "a", 2.0, substeps=10)
    assert blocked and 0.8 <= moved <= 1.0 + 1e-9
    assert s.agents["a"].status.reason == "blocked"


def test_clear_path_moves_fully(world):
    s = fresh(world, a=((100, -10), EAST, 0))
    assert apply_motion(s, world, "a", 2.0) == pytest.approx((2.0, False))


def test_head_on_agents_stop_before_overlap(world):
    s = fresh(world, a=((100, -10), EAST, 0), b=((101.5, -10), math.pi, 0))
    step(s, world, {"a": Action.move_forward(2), "b": Action.move_forward(2)})
    d = math.dist(s.agents["a"].pos, s.agents["b"].pos)
    assert d >= 2 * s.config.agent_radius - 1e-9
    assert s.agents["a"].status.reason == "blocked"


def test_unknown_agent_raises(world):
    s = fresh(world)
    with pytest.raises(SimError):
        step(s, world, {"ghost": Action.wait()})


def test_bad_action_fails_only_that_agent(world):
    s = fresh(world, a=((100, -10), EAST, 0), b=((120, -10), EAST, 0))
    step(s, world, {"a": Action.move_forward(-1), "b": Action.move_forward(1)})
    assert s.agents["a"].status.kind == "failed"
    assert s.agents["b"].x == pytest.approx(121)


# -- buses


def test_board_with_fare(world):
    s = fresh(world, a=((10, 3), EAST, 10))  # bus dwells at (10, 0) on tick 0
    assert board_bus(s, world, "a", 0) is None
    assert s.agents["a"].mode == ON_BUS and s.agents["a"].cash == 8


def test_board_without_cash(world):
    s = fresh(world, a=((10, 3), EAST, 0))
    assert board_bus(s, world, "a", 0) == "insufficient cash"
    assert s.agents["a"].cash == 0


def test_board_bus_mid_route(world):
    s = fresh(world, a=((10, 3), EAST, 10))
    advance_buses(s, world, 15.0)  # dwell over, 50 m down the road
    assert s.transit.buses[0].at_stop is None
    assert board_bus(s, world, "a", 0) == "no bus"


def test_bus_arc_arithmetic_and_snap(world):
    s = fresh(world)
    bus = s.transit.buses[0]
    advance_buses(s, world, 10.0)  # finish dwelling
    advance_buses(s, world, 1.0)
    assert bus.arc == pytest.approx(10.0)
    bus.arc = 172.0  # 8 m short of the second stop arc (180)
    advance_buses(s, world, 1.0)
    assert bus.arc == 180.0 and bus.at_stop == 1


def test_full_loop_time(world):
    s = fresh(world)
    line = world.bus_lines[0]
    period = line.loop_length / s.config.bus_speed + len(line.stops) * s.config.dwell_time
    bus = s.transit.buses[0]
    start = (bus.arc, bus.dwell, bus.at_stop)
    t = 0
    while True:
        advance_buses(s, world, 1.0)
        t += 1
        if (bus.arc, bus.dwell, bus.at_stop) == start:
            break
        assert t < 10_000
    assert t == pytest.approx(period)


def test_passengers_ride_along(world):
    s = fresh(world, a=((10, 3), EAST, 10))
    step(s, world, {"a": Action.enter_bus(0)})
    for _ in range(15):
        step(s, world, {"a": Action.wait()})
        bus = s.transit.buses[0]
        from commsim.simcore import bus_position

        assert s.agents["a"].pos == bus_position(world, bus)[0]


# -- bikes


def test_rent_and_return(world):
    s = fresh(world, a=((20, -3), EAST, 5))
    assert rent_bike(s, world, "a", 0) is None
    assert s.transit.docks[0] == 2 and s.agents["a"].mode == RIDING
    assert return_bike(s, world, "a", 0) is None
    assert s.transit.docks[0] == 3
    assert s.agents["a"].cash == 5 - s.config.bike_rate  # zero minutes bill as one


def test_empty_station_and_not_riding(world):
    s = fresh(world, a=((180, -3), EAST, 5))
    assert rent_bike(s, world, "a", 1) == "no bikes"
    assert return_bike(s, world, "a") == "not riding"


def test_bike_price_rule():
    assert bike_price(0, 0.5) == 0.5
    assert bike_price(60, 0.5) == 0.5
    assert bike_price(61, 0.5) == 1.0


def test_bike_conservation_and_ledger_over_a_ride(world):
    s = fresh(world, a=((20, -3), EAST, 5))
    total = s.transit.total_bikes
    acts = [Action.enter_bike(0)] + [Action.move_forward(5)] * 32 + [Action.exit_bike(1)]
    for act in acts:
        step(s, world, {"a": act})
        assert s.transit.total_bikes == total
    a = s.agents["a"]
    assert a.mode != RIDING and s.transit.docks[1] == 1
    assert 5 - a.cash == a.fares_paid + a.bike_paid


# -- sensing


def test_visibility_range_fov_and_occlusion(world):
    s = fresh(world, a=((100, -10), EAST, 0))
    R = s.config.sense_range
    add_object(s, "near", "box", position=(100 + R - 1, -10))
    add_object(s, "far", "box", position=(100 + R + 1, -10))
    add_object(s, "behind", "box", position=(90, -10))
    ids = {e.id for e in sense(s, world, "a").visible("object")}
    assert ids == {"near"}
    s2 = fresh(world, b=((50, 0), NORTH, 0))
    add_object(s2, "hidden", "box", position=(50, 35))  # the Shop footprint lies between
    assert sense(s2, world, "b").visible("object") == []


def test_messages_respect_radius(world):
    s = fresh(world, a=((0, -10), EAST, 0), b=((60, -10), EAST, 0), c=((40, -10), EAST, 0))
    _, obs = step(s, world, {"a": Action.communicate("hello")})
    assert obs["b"].events == []
    assert obs["c"].events == [("a", "hello")]


def test_accessible_places(world):
    s = fresh(world, a=((50, 7), NORTH, 0))
    assert 0 in sense(s, world, "a").accessible_places


# -- manipulation


def test_pick_and_put(world):
    s = fresh(world, a=((100, -10), EAST, 0))
    for i in range(3):
        add_object(s, f"o{i}", "box", position=(100.5, -10))
    assert pick(s, world, "a", "o0") is None and s.agents["a"].held_objects == ["o0"]
    assert pick(s, world, "a", "o1") is None
    assert pick(s, world, "a", "o2") == "hands full"
    assert put(s, world, "a", "o0", point=(110, -10)) == "out of reach"
    assert put(s, world, "a", "o0", point=(101, -10)) is None
    assert s.objects["o0"].position == (101, -10)


def test_indoor_put_into_container(world):
    s = fresh(world, a=((50, 7), NORTH, 0))
    add_object(s, "o", "box", position=(50.5, 7))
    for act in (Action.pick("o"), Action.enter_place(0), Action.put("o", container="table")):
        step(s, world, {"a": act})
        assert s.agents["a"].status.kind != "failed"
    o = s.objects["o"]
    assert s.agents["a"].mode == INSIDE and (o.place, o.container) == (0, "table")


# -- determinism and serialisation


def _script(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    kinds = [lambda: Action.move_forward(float(rng.uniform(0, 3))), lambda: Action.turn(float(rng.uniform(-3, 3))),
             lambda: Action.wait(), lambda: Action.enter_bike(0), lambda: Action.exit_bike()]
    return [{"a": kinds[int(rng.integers(len(kinds)))](), "b": kinds[int(rng.integers(len(kinds)))]()} for _ in range(60)]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_same_script_same_digest(seed):
    world = street_world()
    chains = []
    for _ in range(2):
        s = fresh(world, a=((20, -3), EAST, 20), b=((30, -6), EAST, 20))
        total = s.transit.total_bikes
        for acts in _script(seed):
            step(s, world, acts)
            assert s.transit.total_bikes == total
            for a in s.agents.values():
                assert len(a.held_objects) <= 2 and a.cash >= 0
        chains.append(s.digest_chain())
    assert chains[0] == chains[1]


def test_state_json_round_trip(world):
    s = fresh(world, a=((20, -3), EAST, 20))
    for acts in _script(3)[:20]:
        step(s, world, {"a": acts["a"]})
    text = s.to_json()
    assert WorldState.from_json(text).to_json() == text


def test_idle_matches_waiting(world):
    s1 = fresh(world, a=((100, -10), EAST, 0))
    s2 = fresh(world, a=((100, -10), EAST, 0))
    idle(s1, world, 37)
    for _ in range(37):
        step(s2, world, {"a": Action.wait()})
    assert s1.sim_time == s2.sim_time
    assert s1.transit.to_dict() == s2.transit.to_dict()


def test_action_dict_round_trip():
    for a in (Action.move_forward(1.5), Action.put("x", point=(1, 2)), Action.communicate("hi"), Action.task_complete(2)):
        assert Action.from_dict(a.to_dict()) == a


def test_config_overrides():
    assert SimConfig.from_overrides({"walk_speed": 3.0}).walk_speed == 3.0
    with pytest.raises(ValueError):
        SimConfig.from_overrides({"warp": 9})
    with pytest.raises(ValueError):
        SimConfig.from_overrides({"walk_speed": -1})


def test_no_agent_inside_footprint_while_outdoors():
    world = tiny_world(buildings=[box(0, 0, 0, 10, 10)])
    s = init_state(world)
    add_agent(s, "a", (-3, 5), EAST)
    for _ in range(10):
        step(s, world, {"a": Action.move_forward(2)})
        assert world.building_at(s.agents["a"].pos) is None
        assert world.clearance(s.agents["a"].pos, 1) >= s.config.agent_radius - 1e-9
