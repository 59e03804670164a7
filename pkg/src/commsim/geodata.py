"""Scene ingestion: OSM-subset parsing, road graph, places, terrain and transit.

Everything here is a pure transformation. The output of the pipeline is a
:class:`SceneBundle`, serialised as a single JSON document (see
``schemas/scene_bundle.schema.json``).
"""

from __future__ import annotations

import json
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import (
    Point,
    centroid,
    closest_point_on_polyline,
    closest_point_on_segment,
    dist,
    is_simple_polygon,
    polyline_length,
    signed_area,
)
from .roadnet import RoadNetwork, RoutingError

log = logging.getLogger(__name__)

SCHEMA_VERSION = "commsim.scene/1"
PLACE_CATEGORIES = ("accommodation", "entertainment", "food", "office", "stores", "open")
EARTH_RADIUS = 6_371_000.0

DEFAULT_ROAD_WIDTH = 6.0
DEFAULT_LANES = 2
DEFAULT_BUILDING_HEIGHT = 10.0
PLACE_MATCH_RADIUS = 50.0
OUTLIER_NEIGHBOURS = 8
OUTLIER_THRESHOLD = 3.0

_ROAD_WIDTHS = {
    "motorway": 12.0,
    "trunk": 10.0,
    "primary": 10.0,
    "secondary": 8.0,
    "tertiary": 7.0,
    "footway": 2.0,
    "path": 2.0,
    "cycleway": 2.0,
    "pedestrian": 4.0,
}
_ONE_LANE = {"footway", "path", "cycleway", "pedestrian", "steps", "service"}


class GeoError(ValueError):
    """Base class for ingestion failures."""


class OsmParseError(GeoError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class GeoValidationError(GeoError):
    pass


# --------------------------------------------------------------------------
# raw OSM subset


@dataclass
class Node:
    id: int
    lat: float
    lon: float
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class Way:
    id: int
    node_ids: list[int]
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class Member:
    type: str
    ref: int
    role: str = ""


@dataclass
class Relation:
    id: int
    members: list[Member]
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class RawGeo:
    nodes: dict[int, Node] = field(default_factory=dict)
    ways: dict[int, Way] = field(default_factory=dict)
    relations: dict[int, Relation] = field(default_factory=dict)

    def validate(self) -> None:
        for n in self.nodes.values():
            if not (math.isfinite(n.lat) and math.isfinite(n.lon)):
                raise GeoValidationError(f"node n{n.id}: non-finite coordinates")
        for w in self.ways.values():
            for ref in w.node_ids:
                if ref not in self.nodes:
                    raise GeoValidationError(f"way w{w.id}: unknown node {ref}")


def _tags(elem: ET.Element) -> dict[str, str]:
    return {t.get("k", ""): t.get("v", "") for t in elem.findall("tag")}


def parse_osm(document: str) -> RawGeo:
    """Parse an OSM v0.6 XML document restricted to node/way/relation elements."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError("malformed XML", line, col) from None
    geo = RawGeo()
    for elem in root:
        if elem.tag == "node":
            nid = int(elem.get("id"))
            if nid in geo.nodes:
                raise GeoValidationError(f"duplicate node id {nid}")
            geo.nodes[nid] = Node(nid, float(elem.get("lat")), float(elem.get("lon")), _tags(elem))
        elif elem.tag == "way":
            wid = int(elem.get("id"))
            if wid in geo.ways:
                raise GeoValidationError(f"duplicate way id {wid}")
            refs = [int(nd.get("ref")) for nd in elem.findall("nd")]
            geo.ways[wid] = Way(wid, refs, _tags(elem))
        elif elem.tag == "relation":
            rid = int(elem.get("id"))
            if rid in geo.relations:
                raise GeoValidationError(f"duplicate relation id {rid}")
            members = [Member(m.get("type", ""), int(m.get("ref")), m.get("role", "")) for m in elem.findall("member")]
            geo.relations[rid] = Relation(rid, members, _tags(elem))
    geo.validate()
    return geo


def to_osm_xml(geo: RawGeo) -> str:
    """Serialise back to OSM XML; ``parse_osm(to_osm_xml(g)) == g``."""
    root = ET.Element("osm", version="0.6", generator="commsim")

    def add_tags(el, tags):
        for k, v in tags.items():
            ET.SubElement(el, "tag", k=k, v=v)

    for n in geo.nodes.values():
        el = ET.SubElement(root, "node", id=str(n.id), lat=repr(n.lat), lon=repr(n.lon))
        add_tags(el, n.tags)
    for w in geo.ways.values():
        el = ET.SubElement(root, "way", id=str(w.id))
        for ref in w.node_ids:
            ET.SubElement(el, "nd", ref=str(ref))
        add_tags(el, w.tags)
    for r in geo.relations.values():
        el = ET.SubElement(root, "relation", id=str(r.id))
        for m in r.members:
            ET.SubElement(el, "member", type=m.type, ref=str(m.ref), role=m.role)
        add_tags(el, r.tags)
    return ET.tostring(root, encoding="unicode")


@dataclass(frozen=True)
class Projection:
    """Local equirectangular projection about ``(lat0, lon0)``."""

    lat0: float
    lon0: float

    @classmethod
    def about_centroid(cls, geo: RawGeo) -> "Projection":
        if not geo.nodes:
            return cls(0.0, 0.0)
        lats = [n.lat for n in geo.nodes.values()]
        lons = [n.lon for n in geo.nodes.values()]
        return cls(sum(lats) / len(lats), sum(lons) / len(lons))

    def forward(self, lat: float, lon: float) -> Point:
        k = math.pi / 180.0
        return (
            EARTH_RADIUS * (lon - self.lon0) * k * math.cos(self.lat0 * k),
            EARTH_RADIUS * (lat - self.lat0) * k,
        )

    def inverse(self, x: float, y: float) -> tuple[float, float]:
        k = math.pi / 180.0
        lat = self.lat0 + y / (EARTH_RADIUS * k)
        lon = self.lon0 + x / (EARTH_RADIUS * k * math.cos(self.lat0 * k))
        return lat, lon


# --------------------------------------------------------------------------
# scene bundle types


@dataclass
class RoadSegment:
    id: int
    centerline: list[Point]
    width: float
    lane_count: int
    one_way: bool
    start_node: int
    end_node: int
    highway: str = ""
    way_id: int | None = None

    @property
    def length(self) -> float:
        return polyline_length(self.centerline)


@dataclass
class Junction:
    id: int
    center: Point
    radius: float
    segments: list[int]


@dataclass
class Building:
    id: int
    name: str
    footprint: list[Point]
    height: float
    category: str


@dataclass
class Place:
    id: int
    name: str
    category: str
    building: int | None
    door: Point


@dataclass
class BusLine:
    id: int
    stops: list[int]
    offsets: list[float]  # travel seconds from stop i to stop i+1 (wrapping)
    loop_period: float
    route: list[Point] = field(default_factory=list)  # closed loop polyline
    stop_arcs: list[float] = field(default_factory=list)
    stop_points: list[Point] = field(default_factory=list)

    @property
    def loop_length(self) -> float:
        return polyline_length(self.route)


@dataclass
class BikeStation:
    id: int
    location: Point
    capacity: int
    initial_count: int


@dataclass
class Heightfield:
    origin: Point
    cell_size: float
    elevations: np.ndarray  # rows x cols, row index along +y

    def __post_init__(self):
        self.elevations = np.asarray(self.elevations, dtype=float)
        if self.elevations.ndim != 2 or min(self.elevations.shape) < 2:
            raise GeoValidationError("heightfield needs at least 2x2 nodes")
        if not np.all(np.isfinite(self.elevations)):
            raise GeoValidationError("heightfield elevations must be finite")
        if not self.cell_size > 0:
            raise GeoValidationError("heightfield cell_size must be positive")

    @property
    def rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def cols(self) -> int:
        return self.elevations.shape[1]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + (self.cols - 1) * self.cell_size, y0 + (self.rows - 1) * self.cell_size)


@dataclass
class SceneBundle:
    roads: list[RoadSegment]
    junctions: list[Junction]
    buildings: list[Building]
    places: list[Place]
    bus_lines: list[BusLine]
    bike_stations: list[BikeStation]
    heightfield: Heightfield
    meta: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        problems = []
        place_ids = {p.id for p in self.places}
        road_ids = {r.id for r in self.roads}
        for p in self.places:
            if p.category not in PLACE_CATEGORIES:
                problems.append(f"place {p.id}: bad category {p.category!r}")
        for line in self.bus_lines:
            for s in line.stops:
                if s not in place_ids:
                    problems.append(f"bus line {line.id}: unknown stop place {s}")
        for j in self.junctions:
            for s in j.segments:
                if s not in road_ids:
                    problems.append(f"junction {j.id}: unknown segment {s}")
        for b in self.buildings:
            if not is_simple_polygon(b.footprint):
                problems.append(f"building {b.id}: footprint not simple")
        return problems

    def to_dict(self) -> dict:
        def pts(seq):
            return [[float(x), float(y)] for x, y in seq]

        return {
            "schema": SCHEMA_VERSION,
            "meta": self.meta,
            "roads": [
                {**asdict(r), "centerline": pts(r.centerline)} for r in self.roads
            ],
            "junctions": [{**asdict(j), "center": list(j.center)} for j in self.junctions],
            "buildings": [{**asdict(b), "footprint": pts(b.footprint)} for b in self.buildings],
            "places": [{**asdict(p), "door": list(p.door)} for p in self.places],
            "bus_lines": [
                {**asdict(b), "route": pts(b.route), "stop_points": pts(b.stop_points)} for b in self.bus_lines
            ],
            "bike_stations": [{**asdict(s), "location": list(s.location)} for s in self.bike_stations],
            "heightfield": {
                "origin": list(self.heightfield.origin),
                "cell_size": self.heightfield.cell_size,
                "rows": self.heightfield.rows,
                "cols": self.heightfield.cols,
                "elevations": self.heightfield.elevations.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SceneBundle":
        if d.get("schema") != SCHEMA_VERSION:
            raise GeoValidationError(f"unsupported scene schema {d.get('schema')!r}")

        def pts(seq):
            return [(float(x), float(y)) for x, y in seq]

        hf = d["heightfield"]
        elev = np.asarray(hf["elevations"], dtype=float).reshape(hf["rows"], hf["cols"])
        return cls(
            roads=[RoadSegment(**{**r, "centerline": pts(r["centerline"])}) for r in d["roads"]],
            junctions=[Junction(**{**j, "center": tuple(j["center"])}) for j in d["junctions"]],
            buildings=[Building(**{**b, "footprint": pts(b["footprint"])}) for b in d["buildings"]],
            places=[Place(**{**p, "door": tuple(p["door"])}) for p in d["places"]],
            bus_lines=[
                BusLine(**{**b, "route": pts(b["route"]), "stop_points": pts(b["stop_points"])})
                for b in d["bus_lines"]
            ],
            bike_stations=[BikeStation(**{**s, "location": tuple(s["location"])}) for s in d["bike_stations"]],
            heightfield=Heightfield(tuple(hf["origin"]), float(hf["cell_size"]), elev),
            meta=d.get("meta", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "SceneBundle":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# roads


@dataclass
class RoadGraph:
    roads: list[RoadSegment]
    junctions: list[Junction]
    warnings: list[str] = field(default_factory=list)


def _parse_number(text: str | None) -> float | None:
    if not text:
        return None
    m = re.match(r"\s*([0-9]*\.?[0-9]+)", text)
    return float(m.group(1)) if m else None


def _is_road(way: Way) -> bool:
    hw = way.tags.get("highway")
    return bool(hw) and hw not in ("proposed", "construction", "bus_stop") and len(way.node_ids) >= 2


def build_road_graph(geo: RawGeo, projection: Projection | None = None) -> RoadGraph:
    """Split highway ways at shared interior nodes and find junctions."""
    proj = projection or Projection.about_centroid(geo)
    warnings: list[str] = []
    road_ways = [w for _, w in sorted(geo.ways.items()) if _is_road(w)]
    usage: dict[int, int] = {}
    for w in road_ways:
        for ref in dict.fromkeys(w.node_ids):
            usage[ref] = usage.get(ref, 0) + 1

    xy = {}

    def pos(ref):
        if ref not in xy:
            n = geo.nodes[ref]
            xy[ref] = proj.forward(n.lat, n.lon)
        return xy[ref]

    roads: list[RoadSegment] = []
    for w in road_ways:
        refs = [r for i, r in enumerate(w.node_ids) if i == 0 or r != w.node_ids[i - 1]]
        hw = w.tags["highway"]
        oneway = w.tags.get("oneway", "no")
        if oneway == "-1":
            refs = list(reversed(refs))
        width = _parse_number(w.tags.get("width")) or _ROAD_WIDTHS.get(hw, DEFAULT_ROAD_WIDTH)
        lanes_tag = _parse_number(w.tags.get("lanes"))
        lanes = int(lanes_tag) if lanes_tag else (1 if hw in _ONE_LANE else DEFAULT_LANES)
        pieces: list[list[int]] = []
        cur = [refs[0]]
        for ref in refs[1:]:
            cur.append(ref)
            if usage.get(ref, 0) >= 2 and ref != refs[-1]:
                pieces.append(cur)
                cur = [ref]
        pieces.append(cur)
        for piece in pieces:
            line = [pos(r) for r in piece]
            if len(piece) < 2 or polyline_length(line) < 1e-6:
                warnings.append(f"way w{w.id}: dropped zero-length segment at node {piece[0]}")
                continue
            roads.append(
                RoadSegment(
                    id=len(roads),
                    centerline=line,
                    width=float(width),
                    lane_count=max(1, lanes),
                    one_way=oneway in ("yes", "1", "true", "-1"),
                    start_node=piece[0],
                    end_node=piece[-1],
                    highway=hw,
                    way_id=w.id,
                )
            )
    incident: dict[int, list[int]] = {}
    for r in roads:
        incident.setdefault(r.start_node, []).append(r.id)
        incident.setdefault(r.end_node, []).append(r.id)
    junctions = []
    for node_id in sorted(incident):
        segs = incident[node_id]
        if len(segs) >= 2:
            width = max(roads[s].width for s in segs)
            junctions.append(Junction(node_id, pos(node_id), float(width), sorted(set(segs))))
    for msg in warnings:
        log.warning(msg)
    return RoadGraph(roads, junctions, warnings)


# --------------------------------------------------------------------------
# buildings and places


def build_buildings(geo: RawGeo, projection: Projection | None = None) -> tuple[list[Building], list[str]]:
    proj = projection or Projection.about_centroid(geo)
    out: list[Building] = []
    warnings: list[str] = []
    for wid, w in sorted(geo.ways.items()):
        tag = w.tags.get("building")
        if not tag or tag == "no":
            continue
        refs = list(w.node_ids)
        if len(refs) < 4 or refs[0] != refs[-1]:
            warnings.append(f"way w{wid}: building outline not closed")
            continue
        poly = [proj.forward(geo.nodes[r].lat, geo.nodes[r].lon) for r in refs[:-1]]
        if signed_area(poly) < 0:
            poly.reverse()
        if not is_simple_polygon(poly):
            warnings.append(f"way w{wid}: building outline not simple")
            continue
        height = _parse_number(w.tags.get("height"))
        if height is None:
            levels = _parse_number(w.tags.get("building:levels"))
            height = levels * 3.0 if levels else DEFAULT_BUILDING_HEIGHT
        out.append(Building(wid, w.tags.get("name", ""), poly, float(height), tag))
    return out, warnings


_FOOD = {"restaurant", "cafe", "fast_food", "bar", "pub", "food_court", "ice_cream", "biergarten"}
_ENTERTAINMENT_AMENITY = {"cinema", "theatre", "nightclub", "arts_centre", "casino", "community_centre"}
_OFFICE_AMENITY = {"bank", "townhall", "post_office", "courthouse", "library", "clinic", "doctors"}
_ENTERTAINMENT_LEISURE = {"sports_centre", "fitness_centre", "bowling_alley", "amusement_arcade", "stadium"}
_OPEN_LEISURE = {"park", "garden", "playground", "pitch", "common", "recreation_ground", "dog_park"}
_OPEN_LANDUSE = {"grass", "recreation_ground", "village_green", "meadow"}
_ACCOMMODATION = {"hotel", "hostel", "motel", "guest_house", "apartment", "chalet"}
_ENTERTAINMENT_TOURISM = {"museum", "attraction", "gallery", "theme_park", "zoo"}


def place_category(tags: dict[str, str]) -> str | None:
    """Map OSM tags onto the six place categories (``None`` if unclassified)."""
    amenity = tags.get("amenity")
    if amenity in _FOOD:
        return "food"
    if amenity in _ENTERTAINMENT_AMENITY:
        return "entertainment"
    if amenity in _OFFICE_AMENITY or "office" in tags:
        return "office"
    if "shop" in tags:
        return "stores"
    tourism = tags.get("tourism")
    if tourism in _ACCOMMODATION:
        return "accommodation"
    if tourism in _ENTERTAINMENT_TOURISM:
        return "entertainment"
    leisure = tags.get("leisure")
    if leisure in _ENTERTAINMENT_LEISURE:
        return "entertainment"
    if leisure in _OPEN_LEISURE or tags.get("landuse") in _OPEN_LANDUSE:
        return "open"
    return None


def _polygon_distance(p: Point, poly: Sequence[Point]) -> float:
    n = len(poly)
    return min(dist(p, closest_point_on_segment(p, poly[i], poly[(i + 1) % n])[0]) for i in range(n))


def _inside(p: Point, poly: Sequence[Point]) -> bool:
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xi:
                inside = not inside
    return inside


def door_point(footprint: Sequence[Point], roads: Sequence[RoadSegment], fallback: Point) -> Point:
    """Point on the footprint boundary closest to any road centreline.

    The minimum distance between two polylines is attained at a vertex of one
    of them, so it suffices to test footprint vertices against the roads and
    road vertices projected onto the footprint edges.
    """
    n = len(footprint)
    edges = [(footprint[i], footprint[(i + 1) % n]) for i in range(n)]
    if not roads:
        return min((closest_point_on_segment(fallback, a, b)[0] for a, b in edges), key=lambda q: dist(q, fallback))
    best: tuple[float, Point] = (math.inf, footprint[0])
    for v in footprint:
        for r in roads:
            _, d, _ = closest_point_on_polyline(v, r.centerline)
            if d < best[0] - 1e-12:
                best = (d, (float(v[0]), float(v[1])))
    for r in roads:
        for rv in r.centerline:
            for a, b in edges:
                q, _ = closest_point_on_segment(rv, a, b)
                d = dist(q, rv)
                if d < best[0] - 1e-12:
                    best = (d, (float(q[0]), float(q[1])))
    return best[1]


@dataclass
class _Amenity:
    key: tuple
    point: Point
    tags: dict[str, str]
    category: str
    building: int | None = None  # set when the element is itself a building


def annotate_places(
    geo: RawGeo,
    buildings: Sequence[Building],
    roads: Sequence[RoadSegment] = (),
    projection: Projection | None = None,
    match_radius: float = PLACE_MATCH_RADIUS,
) -> tuple[list[Place], int]:
    """Match classified amenities to buildings. Returns ``(places, dropped_count)``."""
    proj = projection or Projection.about_centroid(geo)
    entries: list[_Amenity] = []
    building_ids = {b.id for b in buildings}
    for nid, n in sorted(geo.nodes.items()):
        cat = place_category(n.tags)
        if cat:
            entries.append(_Amenity(("n", nid), proj.forward(n.lat, n.lon), n.tags, cat))
    for wid, w in sorted(geo.ways.items()):
        cat = place_category(w.tags)
        if not cat:
            continue
        poly = [proj.forward(geo.nodes[r].lat, geo.nodes[r].lon) for r in w.node_ids]
        if len(poly) > 1 and poly[0] == poly[-1]:
            poly = poly[:-1]
        entries.append(
            _Amenity(("w", wid), centroid(poly), w.tags, cat, building=wid if wid in building_ids else None)
        )
    by_id = {b.id: b for b in buildings}
    places: list[Place] = []
    dropped = 0
    names: set[str] = set()
    for e in entries:
        target: Building | None = None
        if e.building is not None:
            target = by_id[e.building]
        elif e.category != "open":
            inside = [b for b in buildings if _inside(e.point, b.footprint)]
            if inside:
                target = min(inside, key=lambda b: b.id)
            else:
                near = [(_polygon_distance(e.point, b.footprint), b.id, b) for b in buildings]
                near = [t for t in near if t[0] <= match_radius]
                if near:
                    target = min(near, key=lambda t: (t[0], t[1]))[2]
        if target is None and e.category != "open":
            dropped += 1
            continue
        name = e.tags.get("name") or f"{e.category} {e.key[0]}{e.key[1]}"
        if name in names:
            name = f"{name} #{len(places)}"
        names.add(name)
        if target is None:
            door = (float(e.point[0]), float(e.point[1]))
            places.append(Place(len(places), name, "open", None, door))
        else:
            door = door_point(target.footprint, roads, e.point)
            places.append(Place(len(places), name, e.category, target.id, door))
    return places, dropped


# --------------------------------------------------------------------------
# terrain


def read_elevation_csv(text: str) -> list[tuple[float, float, float]]:
    """Parse ``x,y,z`` rows; a header line is allowed."""
    import csv
    import io

    rows = []
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or row[0].strip().startswith("#"):
            continue
        try:
            x, y, z = (float(v) for v in row[:3])
        except ValueError:
            if i == 0:
                continue
            raise GeoValidationError(f"elevation row {i + 1}: expected x,y,z numbers") from None
        rows.append((x, y, z))
    return rows


def filter_outliers(
    samples: np.ndarray, k: int = OUTLIER_NEIGHBOURS, threshold: float = OUTLIER_THRESHOLD
) -> np.ndarray:
    """Boolean keep-mask: drop samples farther than ``threshold`` from the median of their k nearest neighbours.

    The filter needs a full neighbourhood, so it is skipped when fewer than
    ``k + 1`` samples exist.
    """
    n = len(samples)
    if n < k + 1:
        return np.ones(n, dtype=bool)
    tree = cKDTree(samples[:, :2])
    _, idx = tree.query(samples[:, :2], k=k + 1)
    med = np.median(samples[idx[:, 1:], 2], axis=1)
    return np.abs(samples[:, 2] - med) <= threshold


def build_heightfield(samples: Iterable[Sequence[float]], cell_size: float) -> Heightfield:
    pts = np.asarray(list(samples), dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise GeoValidationError("need at least 4 elevation samples")
    if not np.all(np.isfinite(pts)):
        raise GeoValidationError("elevation samples must be finite")
    if not cell_size > 0:
        raise GeoValidationError("cell_size must be positive")
    x0, y0 = pts[:, 0].min(), pts[:, 1].min()
    x1, y1 = pts[:, 0].max(), pts[:, 1].max()
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise GeoValidationError("elevation samples span a degenerate bounding box")
    keep = filter_outliers(pts)
    pts = pts[keep]
    cols = max(2, int(math.ceil((x1 - x0) / cell_size - 1e-9)) + 1)
    rows = max(2, int(math.ceil((y1 - y0) / cell_size - 1e-9)) + 1)
    gx = x0 + np.arange(cols) * cell_size
    gy = y0 + np.arange(rows) * cell_size
    nodes = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
    tree = cKDTree(pts[:, :2])
    elev = np.full(len(nodes), np.nan)
    for i, neigh in enumerate(tree.query_ball_point(nodes, r=cell_size)):
        if not neigh:
            continue
        d = np.hypot(pts[neigh, 0] - nodes[i, 0], pts[neigh, 1] - nodes[i, 1])
        exact = d < 1e-9
        if exact.any():
            elev[i] = pts[np.asarray(neigh)[exact], 2].mean()
        else:
            w = 1.0 / d**2
            elev[i] = float(np.sum(w * pts[neigh, 2]) / np.sum(w))
    grid = elev.reshape(rows, cols)
    empty = np.isnan(grid)
    if empty.all():
        raise GeoValidationError("no elevation sample near any grid node")
    if empty.any():
        _, (ri, ci) = ndimage.distance_transform_edt(empty, return_indices=True)
        grid = grid[ri, ci]
    return Heightfield((float(x0), float(y0)), float(cell_size), grid)


# --------------------------------------------------------------------------
# transit


def _nearest_neighbour_tour(points: Sequence[Point]) -> list[int]:
    start = min(range(len(points)), key=lambda i: (points[i][0], points[i][1], i))
    order = [start]
    left = set(range(len(points))) - {start}
    while left:
        cur = points[order[-1]]
        nxt = min(left, key=lambda i: (dist(cur, points[i]), i))
        order.append(nxt)
        left.remove(nxt)
    return order


def annotate_transit(
    places: Sequence[Place],
    roads: Sequence[RoadSegment],
    n_stops: int,
    n_stations: int,
    seed: int,
    bus_speed: float = 10.0,
    dwell_time: float = 10.0,
    station_capacity: int = 10,
    station_initial: int = 5,
) -> tuple[list[BusLine], list[BikeStation]]:
    """One looping bus line over ``n_stops`` place doors plus spread-out bike stations."""
    if n_stops < 2:
        raise GeoValidationError("a bus line needs at least 2 stops")
    net = RoadNetwork(roads)
    rng = np.random.default_rng(seed)
    snappable = []
    for p in sorted(places, key=lambda p: p.id):
        try:
            snappable.append((p, net.snap(p.door)))
        except RoutingError:
            continue
    if len(snappable) < n_stops:
        raise GeoValidationError(f"only {len(snappable)} places lie near a road; {n_stops} stops requested")
    chosen = [snappable[i] for i in sorted(rng.choice(len(snappable), size=n_stops, replace=False))]
    order = _nearest_neighbour_tour([p.door for p, _ in chosen])
    chosen = [chosen[i] for i in order]
    stop_points = [sn.point for _, sn in chosen]
    offsets: list[float] = []
    route: list[Point] = []
    arcs: list[float] = []
    acc = 0.0
    for i in range(n_stops):
        a, b = stop_points[i], stop_points[(i + 1) % n_stops]
        try:
            leg = net.path(a, b)
            length = net.path_length(a, b)
        except RoutingError:
            raise GeoValidationError(
                f"bus stops unreachable: place {chosen[i][0].id} -> place {chosen[(i + 1) % n_stops][0].id}"
            ) from None
        arcs.append(acc)
        seg_pts = leg if not route else leg[1:]
        route += seg_pts
        acc += polyline_length(leg)
        offsets.append(length / bus_speed)
    line = BusLine(
        id=0,
        stops=[p.id for p, _ in chosen],
        offsets=offsets,
        loop_period=sum(offsets) + n_stops * dwell_time,
        route=route,
        stop_arcs=arcs,
        stop_points=[(float(x), float(y)) for x, y in stop_points],
    )
    stations: list[BikeStation] = []
    if n_stations > 0:
        nodes = net.node_ids
        pos = np.array([net.node_pos[n] for n in nodes])
        if len(nodes) < n_stations:
            raise GeoValidationError(f"only {len(nodes)} road nodes for {n_stations} stations")
        picked = [int(rng.integers(len(nodes)))]
        mind = np.hypot(*(pos - pos[picked[0]]).T)
        while len(picked) < n_stations:
            nxt = int(np.argmax(mind))
            picked.append(nxt)
            mind = np.minimum(mind, np.hypot(*(pos - pos[nxt]).T))
        for k, i in enumerate(picked):
            stations.append(
                BikeStation(k, (float(pos[i, 0]), float(pos[i, 1])), station_capacity, station_initial)
            )
    return [line], stations


# --------------------------------------------------------------------------
# full pipeline


def ingest(
    geo: RawGeo,
    samples: Sequence[Sequence[float]],
    cell_size: float = 10.0,
    n_stops: int = 6,
    n_stations: int = 4,
    seed: int = 0,
    projection: Projection | None = None,
    meta: dict | None = None,
) -> tuple[SceneBundle, list[str]]:
    """Run the whole ingestion pipeline. Returns the bundle and a warning report."""
    geo.validate()
    proj = projection or Projection.about_centroid(geo)
    graph = build_road_graph(geo, proj)
    buildings, bwarn = build_buildings(geo, proj)
    places, dropped = annotate_places(geo, buildings, graph.roads, proj)
    heightfield = build_heightfield(samples, cell_size)
    n_stops = min(n_stops, len(places))
    if n_stops >= 2:
        bus_lines, stations = annotate_transit(places, graph.roads, n_stops, n_stations, seed)
    else:
        bus_lines, stations = [], []
    report = graph.warnings + bwarn + ([f"{dropped} place entries dropped"] if dropped else [])
    bundle = SceneBundle(
        graph.roads,
        graph.junctions,
        buildings,
        places,
        bus_lines,
        stations,
        heightfield,
        meta={"projection": [proj.lat0, proj.lon0], **(meta or {})},
    )
    problems = bundle.validate()
    if problems:
        raise GeoValidationError("; ".join(problems))
    return bundle, report
