import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from commsim.geometry import (
    centroid,
    closest_point_on_polyline,
    is_simple_polygon,
    point_at_arc,
    polygon_edges,
    polyline_length,
    ray_hits,
    segments_intersect,
    signed_area,
    wrap_angle,
)

coord = st.floats(-1000, 1000, allow_nan=False)


def test_square_area_and_centroid():
    sq = [(0, 0), (4, 0), (4, 4), (0, 4)]
    assert signed_area(sq) == 16
    assert signed_area(sq[::-1]) == -16
    assert centroid(sq) == (2.0, 2.0)


def test_bowtie_is_not_simple():
    assert is_simple_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert not is_simple_polygon([(0, 0), (1, 1), (1, 0), (0, 1)])


def test_crossing_segments():
    assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))


def test_point_at_arc_walks_the_polyline():
    line = [(0, 0), (10, 0), (10, 10)]
    assert polyline_length(line) == 20
    p, h = point_at_arc(line, 15)
    assert p == (10.0, 5.0)
    assert math.isclose(h, math.pi / 2)


def test_closest_point_on_polyline():
    p, d, s = closest_point_on_polyline((5, 3), [(0, 0), (10, 0)])
    assert p == (5.0, 0.0) and d == 3 and s == 5


def test_ray_hits_wall():
    edges = polygon_edges([[(5, -1), (6, -1), (6, 1), (5, 1)]])
    r = ray_hits((0, 0), np.array([0.0, math.pi]), edges, 30.0)
    assert math.isclose(r[0], 5.0)
    assert not np.isfinite(r[1]) or r[1] >= 30.0


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


@given(coord, coord, coord, coord)
def test_translation_keeps_area(x, y, dx, dy):
    poly = [(x, y), (x + 3, y), (x + 3, y + 2), (x, y + 2)]
    moved = [(px + dx, py + dy) for px, py in poly]
    assert math.isclose(signed_area(poly), signed_area(moved), rel_tol=1e-6, abs_tol=1e-3)
