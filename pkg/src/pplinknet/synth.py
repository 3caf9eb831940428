"""Seeded synthetic road tiles standing in for an OSM-labelled image corpus.

Each tile has a random planar road graph (Poisson node count, min-distance
rejection, relative-neighbourhood edges), rendered imagery, an exact
"clean" mask and a degraded "pseudo" mask that imitates map-derived labels
(roads slightly too wide or narrow, missing segments, misregistration).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import ndimage

from .geo import GeoTransform, pixel_to_geo
from .graph import SpatialGraph
from .raster import MaskPair, Raster, _to_pixel_xy, draw_polyline, fill_polygon, rasterize_layer, write_image
from .vector import Building, Road, VectorLayer, to_geojson

__all__ = ["NoiseSpec", "SynthConfig", "Tile", "make_tile", "make_dataset", "write_corpus",
           "relative_neighbourhood_edges"]


@dataclass(frozen=True)
class NoiseSpec:
    """Pseudo-label degradation plus imagery noise.

    ``width`` is the max integer jitter in px, ``dropout`` the per-segment
    drop probability, ``offset`` the misregistration shift in px and
    ``pixel`` the imagery noise standard deviation in grey levels.
    """

    width: int = 2
    dropout: float = 0.1
    offset: float = 1.5
    pixel: float = 10.0

    def __post_init__(self):
        if self.width < 0 or self.offset < 0 or self.pixel < 0:
            raise ValueError("noise magnitudes must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """``"width=2,dropout=0.1,offset=1.5,pixel=10"``; omitted keys keep defaults.

        ``"none"`` zeroes the label degradation (imagery noise is kept).
        """
        text = text.strip()
        if text.lower() in ("none", "zero", "clean"):
            return cls(width=0, dropout=0.0, offset=0.0)
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or key not in kinds:
                raise ValueError(f"bad noise spec item {item!r}")
            try:
                values[key] = int(val) if key == "width" else float(val)
            except ValueError:
                raise ValueError(f"bad value in noise spec item {item!r}") from None
        return cls(**values)

    def to_text(self) -> str:
        return f"width={self.width},dropout={self.dropout},offset={self.offset},pixel={self.pixel}"


@dataclass(frozen=True)
class SynthConfig:
    size: int = 64
    road_width: int = 5
    node_density: float = 6.0  # expected nodes per 64x64 area
    min_node_dist: float | None = None  # default size / 8, at least 6 px
    margin: float = 3.0
    buildings: float = 0.0  # expected building count per 64x64 area
    clutter: float = 1.0  # scales image-only distractor counts; 0 gives plain scenes
    resolution: float = 1e-5  # degrees per pixel
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.size < 8:
            raise ValueError("tile size must be >= 8")
        if self.road_width < 1:
            raise ValueError("road width must be >= 1")

    @property
    def min_dist(self) -> float:
        return self.min_node_dist if self.min_node_dist is not None else max(6.0, self.size / 8)


@dataclass
class Tile:
    name: str
    image: np.ndarray  # H x W x 3 uint8
    mask: np.ndarray  # H x W uint8 {0, 255}
    pseudo: np.ndarray
    graph: SpatialGraph  # pixel frame
    layer: VectorLayer  # lon/lat
    geo: GeoTransform
    building_rings: list = field(default_factory=list)  # pixel frame

    def pair(self, pseudo: bool = False) -> MaskPair:
        return MaskPair(self.image, self.pseudo if pseudo else self.mask, self.name, self.graph)


def relative_neighbourhood_edges(points: np.ndarray) -> list[tuple[int, int]]:
    """Pairs ``(i, j)`` with no third point closer to both than they are to each other."""
    n = len(points)
    d = np.hypot(*(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1))
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            worse = np.maximum(d[i], d[j]) < d[i, j]
            worse[[i, j]] = False
            if not worse.any():
                out.append((i, j))
    return out


def _place_nodes(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    area = (cfg.size / 64.0) ** 2
    target = max(2, int(rng.poisson(cfg.node_density * area)))
    lo, hi = cfg.margin, cfg.size - 1 - cfg.margin
    pts: list[np.ndarray] = []
    for _ in range(200 * target):
        if len(pts) == target:
            break
        p = rng.uniform(lo, hi, size=2)
        if all(np.hypot(*(p - q)) >= cfg.min_dist for q in pts):
            pts.append(p)
    return np.array(pts)


def _place_buildings(rng, cfg: SynthConfig, road_mask: np.ndarray) -> list[np.ndarray]:
    n = int(rng.poisson(cfg.buildings * (cfg.size / 64.0) ** 2))
    clearance = ndimage.binary_dilation(road_mask > 0, iterations=2)
    taken = np.zeros_like(clearance)
    rings = []
    for _ in range(20 * n):
        if len(rings) == n:
            break
        w, h = rng.uniform(4, max(5, cfg.size / 8), size=2)
        x0 = rng.uniform(1, cfg.size - 2 - w)
        y0 = rng.uniform(1, cfg.size - 2 - h)
        ring = np.array([(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)])
        m = np.zeros(road_mask.shape, dtype=np.uint8)
        fill_polygon(m, ring)
        fp = m > 0
        if not fp.any() or (fp & (clearance | taken)).any():
            continue
        taken |= ndimage.binary_dilation(fp, iterations=1)
        rings.append(ring)
    return rings


def _texture(rng, size: int, sigma: float) -> np.ndarray:
    t = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    return t / (t.std() + 1e-12)


def _render_image(rng, cfg: SynthConfig, mask_roads: np.ndarray, buildings: np.ndarray) -> np.ndarray:
    """Ground texture, field patches, paved roads and image-only clutter.

    Clutter (roofs, dirt tracks, hedges, tree crowns) never enters the mask;
    tree crowns may occlude roads the mask still labels.
    """
    s = cfg.size
    area = (s / 64.0) ** 2
    k = cfg.clutter
    ground = rng.uniform((70, 85, 50), (135, 140, 105))
    img = ground + 14.0 * _texture(rng, s, 3.0)[:, :, None] + 6.0 * _texture(rng, s, 1.0)[:, :, None]
    for _ in range(rng.poisson(2.0 * k * area)):
        patch = np.zeros((s, s), np.uint8)
        x0, y0 = rng.uniform(-s / 4, s, 2)
        w, h = rng.uniform(s / 6, s / 2, 2)
        fill_polygon(patch, [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)])
        img[patch > 0] += rng.uniform(-25, 25, 3)
    for _ in range(rng.poisson(1.5 * k * area)):
        line = np.zeros((s, s), np.uint8)
        draw_polyline(line, rng.uniform(-4, s + 4, (rng.integers(2, 4), 2)), int(rng.integers(1, 4)))
        colour = rng.choice([(120, 100, 70), (50, 75, 40), (70, 90, 120)])
        img[line > 0] = colour + rng.normal(0, 6, 3)

    paving = rng.uniform(105, 185) + rng.uniform(-8, 8, 3)
    road = mask_roads > 0
    shade = 5.0 * _texture(rng, s, 2.0)
    img[road] = paving + shade[road][:, None]

    clearance = ndimage.binary_dilation(road, iterations=2)
    for _ in range(rng.poisson(2.0 * k * area)):
        roof = np.zeros((s, s), np.uint8)
        x0, y0 = rng.uniform(0, s, 2)
        w, h = rng.uniform(3, max(4, s / 10), 2)
        fill_polygon(roof, [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)])
        fp = roof > 0
        if fp.any() and not (fp & clearance).any():
            img[fp] = rng.uniform(90, 200, 3)
    roof_colour = np.array(rng.choice([(168, 92, 78), (150, 150, 160), (190, 170, 140)]), dtype=np.float64)
    img[buildings > 0] = roof_colour

    yy, xx = np.mgrid[0:s, 0:s]
    for _ in range(rng.poisson(3.0 * k * area)):
        cx, cy = rng.uniform(0, s, 2)
        r = rng.uniform(1.5, 4.0)
        crown = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        img[crown] = (40, 70, 35) + rng.normal(0, 5, 3)

    # soften edges a touch, as imagery never has hard label boundaries
    img = ndimage.gaussian_filter(img, sigma=(0.6, 0.6, 0))
    if cfg.noise.pixel > 0:
        img += rng.normal(0.0, cfg.noise.pixel, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _tile_geo(rng, cfg: SynthConfig) -> GeoTransform:
    lon0 = float(np.round(rng.uniform(-170, 170), 4))
    lat0 = float(np.round(rng.uniform(-60, 60), 4))
    r = cfg.resolution
    return GeoTransform(a=r, b=0.0, c=lon0, d=0.0, e=-r, f=lat0)


def make_tile(seed: int, index: int, cfg: SynthConfig | None = None) -> Tile:
    """Generate tile ``index`` of the corpus defined by ``seed`` and ``cfg``."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng([seed, index])
    gt = _tile_geo(rng, cfg)
    pts = _place_nodes(rng, cfg)
    pairs = relative_neighbourhood_edges(pts) if len(pts) > 1 else []
    graph = SpatialGraph.from_segments(pts, pairs)

    def to_lonlat(xy):
        lon, lat = pixel_to_geo(gt, xy[:, 1], xy[:, 0])
        return np.column_stack([lon, lat])

    roads = [Road(tuple(map(tuple, to_lonlat(pts[[i, j]]))), "residential") for i, j in pairs]
    table = {"residential": cfg.road_width}
    road_mask = rasterize_layer(VectorLayer(roads, []), gt, cfg.size, cfg.size, table).plane

    rings = _place_buildings(rng, cfg, road_mask)
    buildings = [Building(tuple(map(tuple, to_lonlat(r)))) for r in rings]
    layer = VectorLayer(roads, buildings)
    mask = rasterize_layer(layer, gt, cfg.size, cfg.size, table).plane.copy()
    bmask = np.zeros_like(mask)
    for b in buildings:
        fill_polygon(bmask, _to_pixel_xy(gt, b.ring))

    pseudo = _pseudo_mask(rng, cfg, layer, gt)
    image = _render_image(rng, cfg, road_mask, bmask)
    return Tile(f"tile_{index:05d}", image, mask, pseudo, graph, layer, gt, rings)


def _pseudo_mask(rng, cfg: SynthConfig, layer: VectorLayer, gt: GeoTransform) -> np.ndarray:
    noise = cfg.noise
    angle = rng.uniform(0.0, 2.0 * math.pi)
    shift = noise.offset * np.array([math.cos(angle), math.sin(angle)])
    out = np.zeros((cfg.size, cfg.size), dtype=np.uint8)
    for road in layer.roads:
        drop = rng.uniform() < noise.dropout
        jitter = int(rng.integers(-noise.width, noise.width + 1)) if noise.width else 0
        if drop:
            continue
        draw_polyline(out, _to_pixel_xy(gt, road.coords) + shift, max(1, cfg.road_width + jitter))
    for b in layer.buildings:
        fill_polygon(out, _to_pixel_xy(gt, b.ring) + shift)
    return out


def make_dataset(count: int, seed: int, cfg: SynthConfig | None = None, pseudo: bool = False,
                 start: int = 0) -> list[MaskPair]:
    """In-memory pairs for tiles ``start .. start + count - 1``."""
    return [make_tile(seed, i, cfg).pair(pseudo) for i in range(start, start + count)]


def write_corpus(out_dir: str | os.PathLike, count: int, seed: int, cfg: SynthConfig | None = None) -> dict:
    """Write images, masks, pseudo masks, graphs, vectors and two manifests.

    Returns the manifest paths ``{"clean": ..., "pseudo": ...}``. Manifest
    rows are ``image, mask, graph, world file``, tab separated, relative to
    ``out_dir``.
    """
    from .manifest import ManifestRecord, write_manifest

    cfg = cfg or SynthConfig()
    out_dir = os.fspath(out_dir)
    for sub in ("images", "masks", "pseudo", "graphs", "vectors"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    clean_rows, pseudo_rows = [], []
    for i in range(count):
        t = make_tile(seed, i, cfg)
        img = f"images/{t.name}.ppm"
        write_image(os.path.join(out_dir, img), Raster(t.image, t.geo))
        write_image(os.path.join(out_dir, f"masks/{t.name}.pgm"), Raster(t.mask, t.geo))
        write_image(os.path.join(out_dir, f"pseudo/{t.name}.pgm"), Raster(t.pseudo, t.geo))
        with open(os.path.join(out_dir, f"graphs/{t.name}.geojson"), "w") as fh:
            fh.write(t.graph.to_geojson())
        with open(os.path.join(out_dir, f"vectors/{t.name}.geojson"), "w") as fh:
            fh.write(to_geojson(t.layer))
        wld = f"{img}.wld"
        graph = f"graphs/{t.name}.geojson"
        clean_rows.append(ManifestRecord(img, f"masks/{t.name}.pgm", graph, wld))
        pseudo_rows.append(ManifestRecord(img, f"pseudo/{t.name}.pgm", graph, wld))
    paths = {"clean": os.path.join(out_dir, "clean.tsv"), "pseudo": os.path.join(out_dir, "pseudo.tsv")}
    write_manifest(paths["clean"], clean_rows)
    write_manifest(paths["pseudo"], pseudo_rows)
    return paths


def with_noise(cfg: SynthConfig, noise: NoiseSpec) -> SynthConfig:
    return replace(cfg, noise=noise)
