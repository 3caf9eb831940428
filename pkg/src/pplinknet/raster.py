"""Raster containers, PGM/PPM I/O and vector rasterization.

Drawing primitives work on 2-D ``uint8`` arrays in place and use the
pixel-centre convention: pixel ``(row, col)`` has its centre at the
continuous point ``(x=col, y=row)``. Foreground is 255.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geo import GeoTransform, geo_to_pixel, read_world_file, write_world_file

__all__ = [
    "Raster",
    "MaskPair",
    "UnsupportedFormat",
    "CorruptHeader",
    "DegeneratePolygon",
    "DEFAULT_WIDTHS",
    "draw_polyline",
    "fill_polygon",
    "rasterize_layer",
    "read_image",
    "write_image",
    "binarize",
]

FOREGROUND = 255

DEFAULT_WIDTHS = {"primary": 9, "secondary": 7, "residential": 5, "path": 3}


class UnsupportedFormat(ValueError):
    pass


class CorruptHeader(ValueError):
    pass


class DegeneratePolygon(ValueError):
    pass


@dataclass
class Raster:
    """An ``H x W x C`` sample grid with an optional geotransform."""

    data: np.ndarray
    geo: GeoTransform | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"raster data must be HxW, HxWx1 or HxWx3, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("raster must have positive height and width")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def plane(self) -> np.ndarray:
        """The single channel of a 1-channel raster as an ``H x W`` view."""
        if self.channels != 1:
            raise ValueError("plane is only defined for 1-channel rasters")
        return self.data[:, :, 0]

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 1, geo=None) -> "Raster":
        return cls(np.zeros((height, width, channels), dtype=np.uint8), geo)


@dataclass
class MaskPair:
    """An RGB image tile with its binary target mask."""

    image: np.ndarray
    mask: np.ndarray
    name: str = ""
    graph: object | None = field(default=None, repr=False)

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.mask = np.asarray(self.mask)
        if self.mask.ndim == 3:
            self.mask = self.mask[:, :, 0]
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got {self.image.shape}")
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError(
                f"image {self.image.shape[:2]} and mask {self.mask.shape} sizes differ"
            )


def binarize(mask) -> np.ndarray:
    """Boolean foreground of a mask; bool arrays pass through, others use ``> 127``."""
    mask = np.asarray(mask)
    if mask.ndim == 3 and mask.shape[2] == 1:
        mask = mask[:, :, 0]
    if mask.dtype == bool:
        return mask
    return mask > 127


# --------------------------------------------------------------------------
# drawing


def _segment_dist2(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        t = 0.0
    else:
        t = np.clip(((px - x0) * dx + (py - y0) * dy) / seg2, 0.0, 1.0)
    qx = x0 + t * dx - px
    qy = y0 + t * dy - py
    return qx * qx + qy * qy


def draw_polyline(mask: np.ndarray, points: Sequence[Sequence[float]], width_px: int) -> None:
    """Set every pixel whose centre lies within ``width_px / 2`` of the polyline.

    ``points`` are ``(x, y)`` continuous pixel coordinates. Caps and joins
    are round; geometry outside the mask is clipped.
    """
    if width_px < 1:
        raise ValueError("width_px must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        return
    h, w = mask.shape[:2]
    r = width_px / 2.0
    r2 = r * r
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        c0 = max(int(np.ceil(min(x0, x1) - r)), 0)
        c1 = min(int(np.floor(max(x0, x1) + r)), w - 1)
        r0 = max(int(np.ceil(min(y0, y1) - r)), 0)
        r1 = min(int(np.floor(max(y0, y1) + r)), h - 1)
        if c0 > c1 or r0 > r1:
            continue
        ys, xs = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(np.float64)
        hit = _segment_dist2(xs, ys, x0, y0, x1, y1) <= r2
        window = mask[r0 : r1 + 1, c0 : c1 + 1]
        window[hit] = FOREGROUND


def _ring_array(ring) -> np.ndarray:
    pts = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(np.unique(pts, axis=0)) < 3:
        raise DegeneratePolygon(f"polygon needs >= 3 distinct vertices, got {len(pts)}")
    return pts


def fill_polygon(mask: np.ndarray, ring: Sequence[Sequence[float]]) -> None:
    """Fill pixels whose centres are inside ``ring`` under the even-odd rule."""
    pts = _ring_array(ring)
    h, w = mask.shape[:2]
    xi, yi = pts[:, 0], pts[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    r0 = max(int(np.floor(yi.min())), 0)
    r1 = min(int(np.ceil(yi.max())), h - 1)
    c0 = max(int(np.floor(xi.min())), 0)
    c1 = min(int(np.ceil(xi.max())), w - 1)
    if r0 > r1 or c0 > c1:
        return
    xs = np.arange(c0, c1 + 1, dtype=np.float64)
    for row in range(r0, r1 + 1):
        y = float(row)
        crossing = (yi > y) != (yj > y)
        if not crossing.any():
            continue
        inside = np.zeros(xs.shape, dtype=bool)
        for k in np.flatnonzero(crossing):
            x_int = (xj[k] - xi[k]) * (y - yi[k]) / (yj[k] - yi[k]) + xi[k]
            inside ^= xs < x_int
        mask[row, c0 : c1 + 1][inside] = FOREGROUND


def _to_pixel_xy(gt: GeoTransform, coords) -> np.ndarray:
    lonlat = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    rows, cols = geo_to_pixel(gt, lonlat[:, 0], lonlat[:, 1])
    return np.column_stack([cols, rows])


def rasterize_layer(
    layer,
    gt: GeoTransform,
    height: int,
    width: int,
    width_table: Mapping[str, int] | None = None,
    default_width: int | None = None,
) -> Raster:
    """Render a vector layer into a binary pseudo ground-truth mask.

    Roads become polylines of their class width, buildings filled polygons.
    Classes missing from ``width_table`` fall back to ``default_width``
    (the residential width when not given).
    """
    table = dict(DEFAULT_WIDTHS if width_table is None else width_table)
    if default_width is None:
        default_width = table.get("residential", DEFAULT_WIDTHS["residential"])
    mask = np.zeros((height, width), dtype=np.uint8)
    for road in layer.roads:
        pts = _to_pixel_xy(gt, road.coords)
        draw_polyline(mask, pts, int(table.get(road.road_class, default_width)))
    for building in layer.buildings:
        fill_polygon(mask, _to_pixel_xy(gt, building.ring))
    return Raster(mask, geo=gt)


# --------------------------------------------------------------------------
# PGM / PPM


def _read_header(buf: bytes):
    """Parse a netpbm header, returning ``(magic, w, h, maxval, offset)``."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptHeader("truncated netpbm header")
        tokens.append(buf[start:pos])
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise CorruptHeader("netpbm header not terminated by whitespace")
    magic = tokens[0].decode("ascii", "replace")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CorruptHeader(f"non-integer netpbm header fields {tokens[1:]}") from None
    return magic, width, height, maxval, pos + 1


def read_image(path: str | os.PathLike, with_geo: bool = True) -> Raster:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    A ``<path>.wld`` sidecar, when present, is attached as the raster's
    geotransform.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"{path}: only binary P5/P6 netpbm is supported")
    magic, width, height, maxval, offset = _read_header(buf)
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: maxval {maxval} is not supported (need 255)")
    if width < 1 or height < 1:
        raise CorruptHeader(f"{path}: invalid dimensions {width}x{height}")
    channels = 1 if magic == "P5" else 3
    expected = width * height * channels
    payload = buf[offset : offset + expected]
    if len(payload) != expected:
        raise CorruptHeader(f"{path}: pixel payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy()
    geo = None
    sidecar = f"{os.fspath(path)}.wld"
    if with_geo and os.path.exists(sidecar):
        geo = read_world_file(sidecar)
    return Raster(data, geo)


def write_image(path: str | os.PathLike, raster) -> None:
    """Write a raster (or a uint8 array) as P5/P6; also writes the geo sidecar."""
    if not isinstance(raster, Raster):
        raster = Raster(np.asarray(raster))
    data = raster.data
    if data.dtype != np.uint8:
        raise UnsupportedFormat(f"only 8-bit rasters can be written, got {data.dtype}")
    magic = b"P5" if raster.channels == 1 else b"P6"
    header = magic + f"\n{raster.width} {raster.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data).tobytes())
    if raster.geo is not None:
        write_world_file(raster.geo, f"{os.fspath(path)}.wld")
