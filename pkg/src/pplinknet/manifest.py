"""Dataset manifests: one tab-separated record per line.

Columns are ``image``, ``mask``, then optional ``graph`` and ``world file``
paths. Relative paths resolve against the manifest's directory. Blank lines
and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .graph import SpatialGraph
from .raster import MaskPair, read_image

__all__ = ["ManifestError", "ManifestRecord", "read_manifest", "write_manifest", "load_pairs"]


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    image: str
    mask: str
    graph: str | None = None
    world: str | None = None

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.image))[0]


def read_manifest(path: str | os.PathLike, check: bool = True) -> list[ManifestRecord]:
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = [c.strip() for c in line.split("\t")]
        if len(cols) < 2 or len(cols) > 4:
            raise ManifestError(f"{path}:{lineno}: expected 2-4 tab-separated paths, got {len(cols)}")
        cols += [""] * (4 - len(cols))
        resolved = [os.path.join(base, c) if c else None for c in cols]
        if check:
            for c in resolved:
                if c is not None and not os.path.exists(c):
                    raise ManifestError(f"{path}:{lineno}: missing file {c}")
        records.append(ManifestRecord(*resolved))
    return records


def write_manifest(path: str | os.PathLike, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            cols = [r.image, r.mask, r.graph or "", r.world or ""]
            while cols and not cols[-1]:
                cols.pop()
            fh.write("\t".join(cols) + "\n")


def load_pairs(records, with_graph: bool = True) -> list[MaskPair]:
    """Read every record into a :class:`MaskPair` (graphs attached when present)."""
    pairs = []
    for r in records:
        image = read_image(r.image, with_geo=False).data
        mask = read_image(r.mask, with_geo=False).plane
        if image.shape[2] != 3:
            raise ManifestError(f"{r.image}: expected an RGB (P6) image")
        if image.shape[:2] != mask.shape:
            raise ManifestError(f"{r.image}: image {image.shape[:2]} and mask {mask.shape} sizes differ")
        graph = None
        if with_graph and r.graph:
            with open(r.graph, encoding="utf-8") as fh:
                graph = SpatialGraph.from_geojson(fh.read())
        pairs.append(MaskPair(image, mask, r.name, graph))
    return pairs
