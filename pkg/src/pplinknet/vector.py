"""GeoJSON ingest of road and building features.

Only a small subset of GeoJSON is understood: a ``FeatureCollection`` whose
``LineString`` features are roads (class from the ``highway`` property) and
whose ``Polygon`` features tagged ``building`` are footprints. Anything else
is counted and skipped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoTransform, geo_to_pixel

__all__ = [
    "Road",
    "Building",
    "VectorLayer",
    "ParseError",
    "GeometryError",
    "parse_geojson",
    "to_geojson",
    "clip_to_tile",
]

log = logging.getLogger(__name__)

DEFAULT_ROAD_CLASS = "residential"


class ParseError(ValueError):
    pass


class GeometryError(ValueError):
    pass


def _freeze(coords) -> tuple[tuple[float, float], ...]:
    return tuple((float(p[0]), float(p[1])) for p in coords)


@dataclass(frozen=True)
class Road:
    coords: tuple[tuple[float, float], ...]
    road_class: str = DEFAULT_ROAD_CLASS

    def __post_init__(self):
        object.__setattr__(self, "coords", _freeze(self.coords))
        if len(self.coords) < 2:
            raise GeometryError("a road polyline needs at least 2 points")


@dataclass(frozen=True)
class Building:
    ring: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ring = _freeze(self.ring)
        if len(ring) > 1 and ring[0] == ring[-1]:
            ring = ring[:-1]
        if len(ring) < 3:
            raise GeometryError("a building ring needs at least 3 points")
        object.__setattr__(self, "ring", ring)


@dataclass(frozen=True)
class VectorLayer:
    roads: tuple[Road, ...] = ()
    buildings: tuple[Building, ...] = ()
    ignored: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "buildings", tuple(self.buildings))


def _coords(geometry, depth: int):
    coords = geometry.get("coordinates")
    try:
        arr = np.asarray(coords, dtype=np.float64)
    except (TypeError, ValueError):
        arr = None
    if depth == 2:
        if arr is None or arr.ndim != 2 or arr.shape[1] < 2:
            raise GeometryError(f"bad {geometry.get('type')} coordinates")
        return arr[:, :2]
    if not isinstance(coords, list) or not coords:
        raise GeometryError("polygon has no rings")
    outer = np.asarray(coords[0], dtype=np.float64)
    if outer.ndim != 2 or outer.shape[1] < 2:
        raise GeometryError("bad polygon outer ring")
    return outer[:, :2]


def parse_geojson(text: str | bytes) -> VectorLayer:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("expected a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError("FeatureCollection.features must be a list")

    roads, buildings, ignored = [], [], 0
    for feat in features:
        if not isinstance(feat, dict) or feat.get("type") != "Feature":
            raise ParseError("FeatureCollection member is not a Feature")
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        kind = geom.get("type")
        if kind == "LineString":
            cls = props.get("highway") or DEFAULT_ROAD_CLASS
            roads.append(Road(_coords(geom, 2), str(cls)))
        elif kind == "Polygon" and props.get("building") not in (None, False, "no"):
            buildings.append(Building(_coords(geom, 3)))
        else:
            ignored += 1
    if ignored:
        log.warning("ignored %d unsupported GeoJSON feature(s)", ignored)
    return VectorLayer(tuple(roads), tuple(buildings), ignored)


def to_geojson(layer: VectorLayer) -> str:
    features = []
    for road in layer.roads:
        features.append(
            {
                "type": "Feature",
                "properties": {"highway": road.road_class},
                "geometry": {"type": "LineString", "coordinates": [list(p) for p in road.coords]},
            }
        )
    for b in layer.buildings:
        ring = [list(p) for p in b.ring] + [list(b.ring[0])]
        features.append(
            {
                "type": "Feature",
                "properties": {"building": "yes"},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": features})


# --------------------------------------------------------------------------
# tile clipping


def _segment_hits_box(x0, y0, x1, y1, xmin, ymin, xmax, ymax) -> bool:
    """Liang-Barsky test for a segment touching an axis-aligned box."""
    t0, t1 = 0.0, 1.0
    dx, dy = x1 - x0, y1 - y0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return True


def _point_in_ring(x, y, ring) -> bool:
    inside = False
    n = len(ring)
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[i - 1]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
    return inside


def _pixels(gt, coords):
    arr = np.asarray(coords, dtype=np.float64)
    rows, cols = geo_to_pixel(gt, arr[:, 0], arr[:, 1])
    return list(zip(cols.tolist(), rows.tolist()))


def clip_to_tile(layer: VectorLayer, gt: GeoTransform, height: int, width: int, margin_px: float = 0.0) -> VectorLayer:
    """Keep features whose geometry touches the (margin-expanded) tile.

    Geometry is never cut; the rasterizer clips at draw time.
    """
    box = (-0.5 - margin_px, -0.5 - margin_px, width - 0.5 + margin_px, height - 0.5 + margin_px)

    def line_hits(pts):
        return any(_segment_hits_box(*a, *b, *box) for a, b in zip(pts[:-1], pts[1:]))

    roads = [r for r in layer.roads if line_hits(_pixels(gt, r.coords))]
    buildings = []
    for b in layer.buildings:
        pts = _pixels(gt, b.ring)
        closed = pts + [pts[0]]
        corners = [(box[0], box[1]), (box[2], box[1]), (box[0], box[3]), (box[2], box[3])]
        if line_hits(closed) or any(_point_in_ring(x, y, pts) for x, y in corners):
            buildings.append(b)
    return VectorLayer(tuple(roads), tuple(buildings), layer.ignored)

