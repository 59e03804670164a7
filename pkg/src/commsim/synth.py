"""Random scenes with roughly the element counts of a generated 800 m town tile.

``synth_scene`` writes a synthetic OSM extract and elevation samples and then
runs the ordinary ingestion pipeline on them, so synthetic bundles exercise
exactly the same code as real extracts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geodata import (
    GeoValidationError,
    Node,
    Projection,
    RawGeo,
    SceneBundle,
    Way,
    ingest,
)

# Category mix of places in a typical scene (food, stores, accommodation, office, entertainment).
_CATEGORY_WEIGHTS = {
    "food": 25,
    "stores": 21,
    "accommodation": 16,
    "office": 8,
    "entertainment": 5,
}
_CATEGORY_TAGS = {
    "food": [("amenity", "restaurant"), ("amenity", "cafe"), ("amenity", "fast_food")],
    "stores": [("shop", "convenience"), ("shop", "clothes"), ("shop", "bakery")],
    "accommodation": [("tourism", "hotel"), ("tourism", "guest_house")],
    "office": [("office", "company"), ("amenity", "bank")],
    "entertainment": [("amenity", "cinema"), ("leisure", "fitness_centre")],
}
_ORIGIN = Projection(40.0, -75.0)


@dataclass
class SynthParams:
    extent: float = 800.0
    grid: int = 9  # road lines per axis
    buildings: int = 53
    places: int = 85
    open_places: int = 10
    n_stops: int = 8
    n_stations: int = 6
    arterial_every: int = 4  # every n-th road line gets 4 lanes
    relief: float = 6.0  # terrain amplitude, metres
    sample_spacing: float = 40.0

    def check(self) -> None:
        def need(cond, msg):
            if not cond:
                raise GeoValidationError(f"synth params: {msg}")

        need(100.0 <= self.extent <= 5000.0, "extent must be in [100, 5000]")
        need(2 <= self.grid <= 40, "grid must be in [2, 40]")
        slots = 4 * (self.grid - 1) ** 2
        need(1 <= self.buildings <= slots, f"buildings must be in [1, {slots}]")
        need(0 <= self.open_places <= self.places, "open_places must be in [0, places]")
        need(self.places <= 20 * self.buildings + self.open_places, "too many places per building")
        need(self.places >= 2, "places must be >= 2")
        need(2 <= self.n_stops <= self.places, "n_stops must be in [2, places]")
        need(0 <= self.n_stations <= self.grid**2, "n_stations out of range")
        need(self.arterial_every >= 1, "arterial_every must be >= 1")
        need(0.0 <= self.relief <= 200.0, "relief must be in [0, 200]")
        need(5.0 <= self.sample_spacing <= self.extent / 2, "sample_spacing out of range")
        need(self.extent / (self.grid - 1) >= 40.0, "blocks must be at least 40 m")


def synth_scene(seed: int, params: SynthParams | dict | None = None) -> SceneBundle:
    """Deterministic random town: a jittered street grid with buildings, places and transit."""
    if params is None:
        params = SynthParams()
    elif isinstance(params, dict):
        params = SynthParams(**params)
    params.check()
    rng = np.random.default_rng([int(seed), 0x5CE7E])
    geo = RawGeo()
    next_id = [1]

    def new_id():
        next_id[0] += 1
        return next_id[0]

    def add_node(x, y, tags=None):
        lat, lon = _ORIGIN.inverse(float(x), float(y))
        nid = new_id()
        geo.nodes[nid] = Node(nid, lat, lon, dict(tags or {}))
        return nid

    g = params.grid
    block = params.extent / (g - 1)
    jit = 0.05 * block
    lines = np.arange(g) * block
    xs = lines + np.r_[0.0, rng.uniform(-jit, jit, g - 2), 0.0]
    ys = lines + np.r_[0.0, rng.uniform(-jit, jit, g - 2), 0.0]
    grid_nodes = {}
    for i in range(g):
        for j in range(g):
            grid_nodes[i, j] = add_node(xs[j], ys[i])
    for i in range(g):  # east-west roads
        tags = _road_tags(i, params)
        geo.ways[new_id()] = Way(next_id[0], [grid_nodes[i, j] for j in range(g)], tags)
    for j in range(g):  # north-south roads
        tags = _road_tags(j, params)
        geo.ways[new_id()] = Way(next_id[0], [grid_nodes[i, j] for i in range(g)], tags)

    # Quadrant slots inside each block; buildings sit in a random subset.
    slots = []
    for i in range(g - 1):
        for j in range(g - 1):
            for qi in range(2):
                for qj in range(2):
                    slots.append((i, j, qi, qj))
    order = rng.permutation(len(slots))
    used = [slots[k] for k in sorted(order[: params.buildings])]
    free = [slots[k] for k in order[params.buildings :]]

    def slot_box(slot, margin):
        i, j, qi, qj = slot
        x0, x1 = xs[j], xs[j + 1]
        y0, y1 = ys[i], ys[i + 1]
        mx, my = (x0 + x1) / 2, (y0 + y1) / 2
        bx = (x0, mx) if qj == 0 else (mx, x1)
        by = (y0, my) if qi == 0 else (my, y1)
        return bx[0] + margin, by[0] + margin, bx[1] - margin, by[1] - margin

    footprints = []
    for k, slot in enumerate(used):
        bx0, by0, bx1, by1 = slot_box(slot, 8.0)
        w = rng.uniform(0.45, 0.9) * (bx1 - bx0)
        h = rng.uniform(0.45, 0.9) * (by1 - by0)
        cx = rng.uniform(bx0 + w / 2, bx1 - w / 2)
        cy = rng.uniform(by0 + h / 2, by1 - h / 2)
        poly = [(cx - w / 2, cy - h / 2), (cx + w / 2, cy - h / 2), (cx + w / 2, cy + h / 2), (cx - w / 2, cy + h / 2)]
        refs = [add_node(x, y) for x, y in poly]
        levels = int(rng.integers(1, 6))
        bid = new_id()
        geo.ways[bid] = Way(
            bid, refs + [refs[0]], {"building": "yes", "name": f"Building {k + 1}", "building:levels": str(levels)}
        )
        footprints.append(poly)

    n_indoor = params.places - params.open_places
    cats = list(_CATEGORY_WEIGHTS)
    weights = np.array([_CATEGORY_WEIGHTS[c] for c in cats], dtype=float)
    weights /= weights.sum()
    hosts = list(range(len(footprints))) if n_indoor >= len(footprints) else []
    while len(hosts) < n_indoor:
        hosts.append(int(rng.integers(len(footprints))))
    hosts = hosts[:n_indoor]
    counters: dict[str, int] = {}
    for host in hosts:
        cat = cats[int(rng.choice(len(cats), p=weights))]
        key, value = _CATEGORY_TAGS[cat][int(rng.integers(len(_CATEGORY_TAGS[cat])))]
        counters[cat] = counters.get(cat, 0) + 1
        poly = footprints[host]
        px = rng.uniform(poly[0][0] + 1.0, poly[1][0] - 1.0)
        py = rng.uniform(poly[0][1] + 1.0, poly[2][1] - 1.0)
        add_node(px, py, {key: value, "name": f"{value.replace('_', ' ').title()} {counters[cat]}"})

    for k in range(params.open_places):
        if k < len(free):
            bx0, by0, bx1, by1 = slot_box(free[k], 10.0)
            poly = [(bx0, by0), (bx1, by0), (bx1, by1), (bx0, by1)]
            refs = [add_node(x, y) for x, y in poly]
            wid = new_id()
            geo.ways[wid] = Way(wid, refs + [refs[0]], {"leisure": "park", "name": f"Park {k + 1}"})
        else:
            add_node(*rng.uniform(0, params.extent, 2), {"leisure": "park", "name": f"Park {k + 1}"})

    pad = params.sample_spacing
    sx = np.arange(-pad, params.extent + pad + 1e-9, params.sample_spacing)
    phase = rng.uniform(0, 2 * math.pi, 2)
    samples = []
    for y in sx:
        for x in sx:
            z = params.relief * 0.5 * (math.sin(x / 180.0 + phase[0]) + math.cos(y / 230.0 + phase[1]))
            samples.append((float(x), float(y), round(z, 6)))

    bundle, _ = ingest(
        geo,
        samples,
        cell_size=params.sample_spacing,
        n_stops=params.n_stops,
        n_stations=params.n_stations,
        seed=int(seed),
        projection=_ORIGIN,
        meta={"source": "synth", "seed": int(seed), "params": asdict(params)},
    )
    return bundle


def _road_tags(index: int, params: SynthParams) -> dict[str, str]:
    if index % params.arterial_every == 0 and 0 < index < params.grid - 1:
        return {"highway": "secondary", "lanes": "4", "width": "12", "name": f"Avenue {index}"}
    return {"highway": "residential", "name": f"Street {index}"}
