from collections import Counter

import pytest

from commsim.geodata import PLACE_CATEGORIES, GeoValidationError
from commsim.synth import SynthParams, synth_scene
from commsim.worldmodel import WorldMap


def test_same_seed_same_bundle():
    assert synth_scene(3).to_json() == synth_scene(3).to_json()
    assert synth_scene(3).to_json() != synth_scene(4).to_json()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_default_counts_near_targets(seed):
    b = synth_scene(seed)
    for got, want in ((len(b.buildings), 53), (len(b.places), 85), (len(b.junctions), 76)):
        assert 0.5 * want <= got <= 1.5 * want


def test_single_building():
    b = synth_scene(0, {"buildings": 1, "places": 3, "open_places": 1, "n_stops": 2})
    assert len(b.buildings) == 1


def test_bundle_is_consistent():
    b = synth_scene(5)
    assert b.validate() == []
    assert {p.category for p in b.places} <= set(PLACE_CATEGORIES)
    degree = Counter()
    for r in b.roads:
        degree[r.start_node] += 1
        degree[r.end_node] += 1
    assert all(degree[j.id] >= 2 for j in b.junctions)
    WorldMap(b)  # loads without error


@pytest.mark.parametrize("bad", [{"extent": 50.0}, {"grid": 1}, {"buildings": 0}, {"relief": -1.0}, {"places": 1}])
def test_params_out_of_range(bad):
    with pytest.raises(GeoValidationError):
        synth_scene(0, bad)


def test_params_object_equals_dict():
    assert synth_scene(1, SynthParams(buildings=20)).to_json() == synth_scene(1, {"buildings": 20}).to_json()
