import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commsim.geometry import dist
from commsim.nav import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    Navigator,
    OccupancyGrid,
    SensedStore,
    Unreachable,
    fine_cell,
    integrate_sensing,
    next_action,
    plan_path,
    ray_cells,
    to_occupancy,
    to_pgm,
)
from commsim.simcore import add_agent, init_state, sense, step
from helpers import street_world

SQ2 = math.sqrt(2.0)


def dijkstra_cost(cells: np.ndarray, start, goals, penalty: float = 1.5) -> float:
    """Reference cost via networkx under the same movement rules as the planner."""
    g = nx.DiGraph()
    w, h = cells.shape
    for x in range(w):
        for y in range(h):
            if cells[x, y] == OCCUPIED:
                continue
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    u, v = x + dx, y + dy
                    if not (0 <= u < w and 0 <= v < h) or cells[u, v] == OCCUPIED:
                        continue
                    diag = dx and dy
                    if diag and (cells[x + dx, y] == OCCUPIED or cells[x, y + dy] == OCCUPIED):
                        continue
                    c = SQ2 if diag else 1.0
                    if cells[u, v] == UNKNOWN:
                        c *= penalty
                    g.add_edge((x, y), (u, v), weight=c)
    g.add_node("sink")
    for gl in goals:
        if g.has_node(gl):
            g.add_edge(gl, "sink", weight=0.0)
    if start in goals:
        return 0.0
    try:
        return nx.shortest_path_length(g, start, "sink", weight="weight")
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return math.inf


# --- sensing store ---------------------------------------------------------


def test_no_rays_leave_store_unchanged():
    s = SensedStore()
    integrate_sensing(s, (0.0, 0.0, 0.0), [])
    assert s.counts() == (0, 0)


def test_single_hit_marks_one_occupied_and_free_run():
    s = SensedStore()
    integrate_sensing(s, (0.05, 0.05, 0.0), [(0.0, 5.0)])
    occ, free = s.counts()
    assert occ == 1
    assert s.is_occupied(fine_cell(5.05, 0.05))
    # the traversal oracle: cells 0..49 along x on row 0
    assert s.cells(1) == {(i, 0) for i in range(50)}
    assert free == 50


def test_resensing_is_idempotent():
    rays = [(a, 4.0 + 0.1 * k) for k, a in enumerate(np.linspace(-1, 1, 64))]
    s = SensedStore()
    integrate_sensing(s, (1.0, 2.0, 0.0), rays)
    first = (s.cells(1), s.cells(2))
    integrate_sensing(s, (1.0, 2.0, 0.0), rays)
    assert (s.cells(1), s.cells(2)) == first


def test_cells_never_both_free_and_occupied():
    s = SensedStore()
    integrate_sensing(s, (0.0, 0.0, 0.0), [(0.0, 3.0)])
    integrate_sensing(s, (-2.0, 0.0, 0.0), [(0.0, None)], max_range=10.0)
    assert not (s.cells(1) & s.cells(2))
    assert s.is_occupied(fine_cell(3.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-math.pi, math.pi), st.floats(0.05, 30))
def test_ray_cells_are_contiguous_and_end_right(x, y, a, length):
    cells = ray_cells((x, y), a, length)
    # a ray leaving from a cell boundary may not spend any length in the origin cell
    c0 = fine_cell(x, y)
    assert max(abs(cells[0][0] - c0[0]), abs(cells[0][1] - c0[1])) <= 1
    end = (x + length * math.cos(a), y + length * math.sin(a))
    assert max(abs(cells[-1][0] - fine_cell(*end)[0]), abs(cells[-1][1] - fine_cell(*end)[1])) <= 1
    for p, q in zip(cells, cells[1:]):
        assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1
    assert len(set(cells)) == len(cells)


# --- occupancy -------------------------------------------------------------


def test_empty_store_is_all_unknown():
    g = to_occupancy(SensedStore(), (0, 0, 5, 5))
    assert g.shape == (10, 10)
    assert (g.cells == UNKNOWN).all()


def test_one_fine_cell_occupies_its_coarse_cell():
    s = SensedStore()
    s.mark_occupied([(7, 3)])  # x in [0.7, 0.8) -> coarse column 1
    g = to_occupancy(s, (0, 0, 5, 5))
    assert g.cells[1, 0] == OCCUPIED
    assert (g.cells == OCCUPIED).sum() == 1


def test_occupied_dominates_mixed_block():
    s = SensedStore()
    s.mark_free([(i, j) for i in range(5) for j in range(5)])
    s.mark_occupied([(4, 4)])
    s.mark_free([(i, j) for i in range(5, 10) for j in range(5)])
    g = to_occupancy(s, (0, 0, 1, 0.5))
    assert g.cells[0, 0] == OCCUPIED
    assert g.cells[1, 0] == FREE


def test_occupancy_window_across_negative_tiles():
    s = SensedStore()
    s.mark_occupied([fine_cell(-30.2, -0.1), fine_cell(0.3, 0.3)])
    g = to_occupancy(s, (-31, -1, 1, 1))
    assert g.cells[g.cell_of((-30.2, -0.1))] == OCCUPIED
    assert g.cells[g.cell_of((0.3, 0.3))] == OCCUPIED
    assert (g.cells == OCCUPIED).sum() == 2


def test_pgm_dump():
    g = OccupancyGrid((0.0, 0.0), np.array([[UNKNOWN, FREE], [OCCUPIED, FREE]], dtype=np.int8))
    text = to_pgm(g)
    assert text.splitlines()[:3] == ["P2", "2 2", "255"]
    assert text.splitlines()[3:] == ["255 255", "128 0"]


# --- A* --------------------------------------------------------------------


def test_start_inside_goal_region():
    res = plan_path(np.zeros((5, 5), np.int8), (2, 2), [(2, 2), (3, 3)])
    assert res.cells == [(2, 2)] and res.cost == 0.0


def test_empty_grid_corner_to_corner():
    res = plan_path(np.zeros((10, 10), np.int8), (0, 0), [(9, 9)])
    assert res.cost == pytest.approx(9 * SQ2, abs=1e-12)
    assert len(res.cells) == 10


def test_walled_goal_is_unreachable():
    cells = np.zeros((7, 7), np.int8)
    cells[2:5, 2:5] = OCCUPIED
    cells[3, 3] = FREE
    with pytest.raises(Unreachable, match="unreachable"):
        plan_path(cells, (0, 0), [(3, 3)])


def test_unknown_cells_cost_more():
    cells = np.full((5, 1), UNKNOWN, np.int8)
    res = plan_path(cells, (0, 0), [(4, 0)])
    assert res.cost == pytest.approx(4 * 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_astar_matches_dijkstra(seed):
    rng = np.random.default_rng(seed)
    cells = np.where(rng.random((20, 20)) < 0.3, OCCUPIED, np.where(rng.random((20, 20)) < 0.2, UNKNOWN, FREE)).astype(np.int8)
    cells[0, 0] = FREE
    goal = [(19, 19), (18, 19)]
    ref = dijkstra_cost(cells, (0, 0), goal)
    if math.isinf(ref):
        with pytest.raises(Unreachable):
            plan_path(cells, (0, 0), goal)
        return
    res = plan_path(cells, (0, 0), goal)
    assert abs(res.cost - ref) <= 1e-9
    for a, b in zip(res.cells, res.cells[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
    assert all(cells[c] != OCCUPIED for c in res.cells)


def test_paths_are_deterministic():
    cells = np.zeros((15, 15), np.int8)
    a = plan_path(cells, (0, 7), [(14, 7)]).cells
    assert a == plan_path(cells, (0, 7), [(14, 7)]).cells


# --- primitives ------------------------------------------------------------


def test_next_action_dead_ahead_is_capped():
    a = next_action([(10.0, 0.0)], (0.0, 0.0, 0.0))
    assert a.kind == "move_forward" and a.distance == 2.0


def test_next_action_turns_left():
    a = next_action([(0.0, 5.0)], (0.0, 0.0, 0.0))
    assert a.kind == "turn" and a.angle == pytest.approx(math.pi / 2)


def test_next_action_short_step():
    a = next_action([(0.5, 0.0)], (0.0, 0.0, 0.0))
    assert a.kind == "move_forward" and a.distance == pytest.approx(0.5)


def test_next_action_small_heading_error_still_moves():
    a = next_action([(10.0, 0.5)], (0.0, 0.0, 0.0))  # about 2.9 degrees off
    assert a.kind == "move_forward"


# --- full loop -------------------------------------------------------------


def test_navigator_walks_around_a_building():
    world = street_world()
    s = init_state(world, seed=0)
    add_agent(s, "a", (50.0, 5.0), math.pi / 2)
    nav = Navigator(world)
    goal = (50.0, 35.0)  # directly behind the shop
    obs = sense(s, world, "a")
    for tick in range(200):
        act = nav.step_toward(obs, goal, radius=1.0)
        if act is None:
            break
        _, out = step(s, world, {"a": act}, observe=["a"])
        obs = out["a"]
    assert dist(s.agents["a"].pos, goal) <= 1.0
    assert tick < 200
