import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commsim.geodata import BikeStation, Heightfield, Place
from commsim.worldmodel import WorldError, elevation_at, line_of_sight, nearest_station, nearest_stop, road_path_length
from helpers import box, loop_line, road, street_world, tiny_world


def test_bilinear_examples():
    hf = Heightfield((0.0, 0.0), 1.0, np.array([[0.0, 0.0], [0.0, 4.0]]))
    assert elevation_at(hf, (0.5, 0.5)) == 1.0
    hf = Heightfield((0.0, 0.0), 1.0, np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert elevation_at(hf, (0.5, 0.0)) == 1.5
    assert elevation_at(hf, (1.0, 1.0)) == 4.0


def test_out_of_bounds():
    hf = Heightfield((0.0, 0.0), 1.0, np.zeros((2, 2)))
    with pytest.raises(WorldError):
        elevation_at(hf, (2.0, 0.0))


def test_grid_nodes_and_cell_edges(world0):
    hf = world0.bundle.heightfield
    x0, y0 = hf.origin
    for r in range(0, hf.rows, 5):
        for c in range(0, hf.cols, 5):
            assert abs(world0.elevation_at((x0 + c * hf.cell_size, y0 + r * hf.cell_size)) - hf.elevations[r, c]) <= 1e-9
    # shared cell edge: approach from both sides
    x = x0 + 3 * hf.cell_size
    y = y0 + 2.5 * hf.cell_size
    assert abs(world0.elevation_at((x - 1e-12, y)) - world0.elevation_at((x + 1e-12, y))) <= 1e-9


def test_line_of_sight():
    assert line_of_sight(tiny_world(), (0, 0), (10, 10))
    w = tiny_world(buildings=[box(0, 10, -5, 20, 5)])
    assert not line_of_sight(w, (0, 0), (30, 0))
    assert line_of_sight(w, (0, 10), (30, 10))
    assert line_of_sight(w, (0, 5), (30, 5))  # grazing an edge is not blocked


def test_line_of_sight_symmetric(world0):
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 800, (1000, 2, 2))
    for a, b in pts:
        assert world0.line_of_sight(a, b) == world0.line_of_sight(b, a)


def _stop_world(points):
    places = [Place(i, f"S{i}", "open", None, tuple(map(float, p))) for i, p in enumerate(points)]
    return tiny_world(places=places, lines=[loop_line(list(range(len(points))), points)] if len(points) > 1 else [])


def test_nearest_stop_tie_goes_to_lower_id():
    w = _stop_world([(0, 0), (10, 0)])
    assert nearest_stop(w, (5, 0)) == (0, 5.0)
    assert nearest_stop(w, (9, 1))[0] == 1


def test_nearest_stop_matches_scan():
    rng = np.random.default_rng(5)
    pts = [tuple(p) for p in rng.uniform(0, 100, (5, 2))]
    w = _stop_world(pts)
    for q in rng.uniform(-20, 120, (200, 2)):
        d = [math.dist(q, p) for p in pts]
        sid, dd = nearest_stop(w, q)
        assert sid == int(np.argmin(d)) and dd == min(d)


def test_no_transit_errors():
    w = tiny_world()
    with pytest.raises(WorldError):
        nearest_stop(w, (0, 0))
    with pytest.raises(WorldError):
        nearest_station(w, (0, 0))


def test_nearest_station():
    w = tiny_world(stations=[BikeStation(0, (0.0, 0.0), 5, 5)])
    assert nearest_station(w, (3, 4)) == (0, 5.0)


def test_road_lengths():
    w = tiny_world(roads=[road(0, [(0, 0), (100, 0)], 1, 2)])
    assert road_path_length(w, (0, 0), (0, 0)) == 0
    assert math.isclose(road_path_length(w, (0, 0), (100, 0)), 100.0)


def test_ring_matches_both_arcs():
    # 4 nodes on a rectangle 100 x 50; the shorter way round wins
    c = [(0, 0), (100, 0), (100, 50), (0, 50)]
    roads = [road(i, [c[i], c[(i + 1) % 4]], i, (i + 1) % 4) for i in range(4)]
    w = tiny_world(roads=roads)
    a, b = (30, 0), (80, 50)
    arc1 = 70 + 50 + 20  # east then north then west
    arc2 = 30 + 50 + 80  # west then north then east
    assert math.isclose(road_path_length(w, a, b), min(arc1, arc2))


def test_unreachable():
    roads = [road(0, [(0, 0), (100, 0)], 1, 2), road(1, [(0, 300), (100, 300)], 3, 4)]
    w = tiny_world(roads=roads)
    with pytest.raises(WorldError):
        road_path_length(w, (10, 0), (10, 300))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10_000), st.floats(0, 1)), min_size=3, max_size=3))
def test_triangle_inequality(world0, picks):
    from commsim.geometry import point_at_arc

    roads = world0.bundle.roads
    a, b, c = (point_at_arc(roads[i % len(roads)].centerline, f * roads[i % len(roads)].length)[0] for i, f in picks)
    ab, bc, ac = world0.road_path_length(a, b), world0.road_path_length(b, c), world0.road_path_length(a, c)
    assert ac <= ab + bc + 1e-6


def test_building_at_and_access_point():
    w = street_world()
    assert w.building_at((50, 20)) == 0
    assert w.building_at((50, 10)) is None  # boundary counts as outside
    ap = w.access_point(0)
    assert w.building_at(ap) is None and math.isclose(math.dist(ap, (50, 10)), 0.8)
