import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commsim.geodata import Junction
from commsim.traffic import (
    PEDESTRIAN,
    VEHICLE,
    JunctionGate,
    TrafficConfig,
    TrafficEntity,
    TrafficState,
    census_json,
    choose_direction,
    gap_violations,
    junction_occupancy,
    maybe_lane_change,
    pedestrian_adjust,
    request_junction,
    spawn_and_step_traffic,
    spawn_traffic,
)
from commsim.worldmodel import WorldMap
from helpers import flat, road
from commsim.geodata import SceneBundle

CENTER = 0


def cross_world(arm: float = 100.0, lanes: int = 2) -> WorldMap:
    """Four 100 m arms meeting at node 0; arm i starts at the centre."""
    ends = [(arm, 0), (0, arm), (-arm, 0), (0, -arm)]
    roads = [road(i, [(0, 0), e], CENTER, i + 1, lanes=lanes) for i, e in enumerate(ends)]
    j = Junction(CENTER, (0.0, 0.0), 6.0, [0, 1, 2, 3])
    return WorldMap(SceneBundle(roads, [j], [], [], [], [], flat(400.0, (-200.0, -200.0))))


def state(*entities, cfg=None) -> TrafficState:
    t = TrafficState(cfg or TrafficConfig(), {e.id: e for e in entities}, {CENTER: JunctionGate(CENTER)})
    return t


def veh(eid, seg, arc, direction=1, lane=0, speed=8.0):
    return TrafficEntity(eid, VEHICLE, seg, lane, direction, arc, speed)


# -- junction gate


def test_gate_examples():
    g = JunctionGate(1)
    assert request_junction(g, "a")
    assert request_junction(g, "a")
    assert not request_junction(g, "b")
    g.occupant = None  # occupant left the zone
    assert request_junction(g, "b")


def test_gate_released_after_exit():
    w = cross_world()
    # both approach the centre (direction -1 runs from the outer end toward node 0)
    t = state(veh("a", 0, 85.0, -1), veh("b", 1, 85.0, -1))
    spawn_and_step_traffic(w, t, 0, 1.0)
    assert t.gates[CENTER].occupant == "a"
    assert t.entities["b"].arc <= 100 - t.config.junction_radius + 1e-9
    seen_b = False
    for _ in range(10):
        spawn_and_step_traffic(w, t, 0, 1.0)
        assert max(junction_occupancy(w, t).values(), default=0) <= 1
        seen_b |= t.gates[CENTER].occupant == "b"
    assert seen_b


# -- direction choice


def test_fewer_vehicles_wins():
    w = cross_world()
    others = [veh(f"x{i}", 1, 50.0 + 5 * i) for i in range(3)] + [veh("y", 2, 50.0), veh("z0", 3, 40.0), veh("z1", 3, 60.0)]
    me = veh("me", 0, 99.0, -1)
    t = state(me, *others)
    seg, lane, d = choose_direction(w, t, me, CENTER)
    assert (seg, d) == (2, 1)


def test_tie_goes_to_lowest_segment():
    w = cross_world()
    me = veh("me", 0, 99.0, -1)
    assert choose_direction(w, state(me), me, CENTER)[0] == 1


def test_single_outgoing_and_dead_end():
    roads = [road(0, [(0, 0), (100, 0)], 1, 2), road(1, [(100, 0), (200, 0)], 2, 3)]
    j = Junction(2, (100.0, 0.0), 6.0, [0, 1])
    w = WorldMap(SceneBundle(roads, [j], [], [], [], [], flat(400.0, (-100.0, -200.0))))
    me = veh("me", 0, 99.0)
    t = TrafficState(TrafficConfig(), {"me": me}, {2: JunctionGate(2)})
    assert choose_direction(w, t, me, 2)[0::2] == (1, 1)
    end = veh("e", 1, 99.0)
    assert choose_direction(w, t, end, 3)[0::2] == (1, -1)  # U-turn


# -- pedestrians


def test_close_pedestrians_step_right():
    o1, o2 = pedestrian_adjust((0, 0), 0.0, (0.4, 0), math.pi, threshold=1.0)
    assert o1 == pytest.approx((0.0, -0.3))  # right of east is south
    assert o2 == pytest.approx((0.0, 0.3))  # right of west is north: opposite world directions


def test_far_pedestrians_unchanged():
    assert pedestrian_adjust((0, 0), 0.0, (2, 0), math.pi, threshold=1.0) == ((0.0, 0.0), (0.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_adjust_is_symmetric_and_never_closer(x, y, h1, h2):
    p1, p2 = (0.0, 0.0), (x * 0.7, y * 0.7)
    a, b = pedestrian_adjust(p1, h1, p2, h2)
    b2, a2 = pedestrian_adjust(p2, h2, p1, h1)
    assert (a, b) == (a2, b2)
    if math.dist(p1, p2) < 1.0:
        assert math.isclose(math.hypot(*a), 0.3) and math.isclose(math.hypot(*b), 0.3)
    after = math.dist((p1[0] + a[0], p1[1] + a[1]), (p2[0] + b[0], p2[1] + b[1]))
    assert after >= math.dist(p1, p2) - 1e-9


# -- lane changes


def _two_lane_segment(n_here, n_next):
    w = cross_world(lanes=4)  # two lanes each way
    ents = [veh(f"h{i}", 0, 10.0 + 20 * i, lane=0) for i in range(n_here)]
    ents += [veh(f"n{i}", 0, 18.0 + 20 * i, lane=1) for i in range(n_next)]
    return w, state(*ents)


def test_congested_lane_switches():
    w, t = _two_lane_segment(5, 1)  # 5 per 100 m against 1 per 100 m
    v = t.entities["h2"]
    assert maybe_lane_change(t, v, w) == 1


def test_equal_density_keeps_lane():
    w, t = _two_lane_segment(5, 5)
    assert maybe_lane_change(t, t.entities["h3"], w) == 0


def test_single_lane_keeps():
    w = cross_world(lanes=2)  # one lane each way
    t = state(*[veh(f"h{i}", 0, 10.0 + 15 * i) for i in range(6)])
    assert maybe_lane_change(t, t.entities["h2"], w) == 0


# -- stepping


def test_uniform_motion_on_straight_road():
    w = WorldMap(SceneBundle([road(0, [(0, 0), (1000, 0)], 1, 2)], [], [], [], [], [], flat(1200.0, (-100.0, -600.0))))
    v = veh("v", 0, 0.0)
    t = TrafficState(TrafficConfig(), {"v": v}, {})
    for k in range(1, 11):
        spawn_and_step_traffic(w, t, 0, 1.0)
        assert v.arc == pytest.approx(8.0 * k)


def test_follower_stops_at_safety_gap():
    w = WorldMap(SceneBundle([road(0, [(0, 0), (1000, 0)], 1, 2)], [], [], [], [], [], flat(1200.0, (-100.0, -600.0))))
    t = TrafficState(TrafficConfig(), {"lead": veh("lead", 0, 50.0, speed=0.0), "f": veh("f", 0, 0.0)}, {})
    for _ in range(20):
        spawn_and_step_traffic(w, t, 0, 1.0)
    assert t.entities["f"].arc == pytest.approx(50.0 - t.config.safety_gap)


def test_step_is_deterministic(world0):
    runs = []
    for _ in range(2):
        t = spawn_traffic(world0, 20, 10, seed=4)
        for _ in range(200):
            spawn_and_step_traffic(world0, t, 4, 1.0)
        runs.append(json.dumps(t.to_dict(), sort_keys=True))
    assert runs[0] == runs[1]


def test_short_fuzz_invariants(world0):
    t = spawn_traffic(world0, 50, 30, seed=11)
    total = len(t.entities)
    for _ in range(500):
        spawn_and_step_traffic(world0, t, 11, 1.0)
        assert max(junction_occupancy(world0, t).values(), default=0) <= 1
        assert gap_violations(t) == []
        assert len(t.entities) == total
    counts = json.loads(census_json(t))
    assert sum(r[VEHICLE] + r[PEDESTRIAN] for r in counts.values()) == total


def test_bad_dt():
    w = cross_world()
    with pytest.raises(ValueError):
        spawn_and_step_traffic(w, state(), 0, 0.0)
