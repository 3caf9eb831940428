"""Affine geotransform between pixel indices and geographic coordinates.

A :class:`GeoTransform` holds six coefficients ``(a, b, c, d, e, f)`` with::

    lon = a * (col + 0.5) + b * (row + 0.5) + c
    lat = d * (col + 0.5) + e * (row + 0.5) + f

so integer ``(row, col)`` address pixel centres. Coordinates are treated as
opaque planar values; no datum or projection handling is done here.
"""

from __future__ import annotations

import math
import os
from dataclasses import astuple, dataclass

import numpy as np

__all__ = [
    "GeoTransform",
    "SingularTransform",
    "MalformedWorldFile",
    "pixel_to_geo",
    "geo_to_pixel",
    "read_world_file",
    "write_world_file",
]

_SINGULAR_EPS = 1e-15


class SingularTransform(ValueError):
    """Raised when a geotransform cannot be inverted."""


class MalformedWorldFile(ValueError):
    """Raised when a world file does not hold exactly six numbers."""


@dataclass(frozen=True)
class GeoTransform:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    @classmethod
    def identity(cls) -> "GeoTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @property
    def determinant(self) -> float:
        return self.a * self.e - self.b * self.d

    def as_matrix(self) -> np.ndarray:
        """Return the 2x3 matrix acting on ``(col + 0.5, row + 0.5, 1)``."""
        return np.array([[self.a, self.b, self.c], [self.d, self.e, self.f]])

    def pixel_to_geo(self, row, col):
        return pixel_to_geo(self, row, col)

    def geo_to_pixel(self, lon, lat):
        return geo_to_pixel(self, lon, lat)


def pixel_to_geo(gt: GeoTransform, row, col):
    """Map continuous pixel coordinates to ``(lon, lat)``.

    Works elementwise on scalars or numpy arrays.
    """
    x = np.asarray(col, dtype=np.float64) + 0.5
    y = np.asarray(row, dtype=np.float64) + 0.5
    lon = gt.a * x + gt.b * y + gt.c
    lat = gt.d * x + gt.e * y + gt.f
    if lon.ndim == 0:
        return float(lon), float(lat)
    return lon, lat


def geo_to_pixel(gt: GeoTransform, lon, lat):
    """Invert :func:`pixel_to_geo`, returning continuous ``(row, col)``."""
    det = gt.determinant
    if not math.isfinite(det) or abs(det) < _SINGULAR_EPS:
        raise SingularTransform(f"geotransform determinant {det!r} is not invertible")
    u = np.asarray(lon, dtype=np.float64) - gt.c
    v = np.asarray(lat, dtype=np.float64) - gt.f
    x = (gt.e * u - gt.b * v) / det
    y = (gt.a * v - gt.d * u) / det
    row = y - 0.5
    col = x - 0.5
    if row.ndim == 0:
        return float(row), float(col)
    return row, col


# World files list the coefficients column-major: a, d, b, e, c, f.
_WORLD_ORDER = ("a", "d", "b", "e", "c", "f")


def read_world_file(path: str | os.PathLike) -> GeoTransform:
    """Read six lines ``a, d, b, e, c, f`` straight into a :class:`GeoTransform`.

    Lines 5 and 6 are taken as the ``c`` and ``f`` offsets of this module's
    transform, which sit at the outer corner of pixel (0, 0). ESRI world files
    give the centre of that pixel there instead; subtract ``(a + b) / 2`` and
    ``(d + e) / 2`` to convert one of those.
    """
    with open(path, "r", encoding="ascii", errors="strict") as fh:
        text = fh.read()
    lines = [ln.strip() for ln in text.splitlines()]
    while lines and lines[-1] == "":
        lines.pop()
    if len(lines) != 6:
        raise MalformedWorldFile(f"{path}: expected 6 lines, found {len(lines)}")
    values = {}
    for key, line in zip(_WORLD_ORDER, lines):
        try:
            values[key] = float(line)
        except ValueError:
            raise MalformedWorldFile(f"{path}: non-numeric line {line!r}") from None
    return GeoTransform(**values)


def write_world_file(gt: GeoTransform, path: str | os.PathLike) -> None:
    coeffs = dict(zip("abcdef", astuple(gt)))
    body = "".join(f"{float(coeffs[k]):.17g}\n" for k in _WORLD_ORDER)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(body)
