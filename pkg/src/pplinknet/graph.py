"""Spatial road graphs: mask skeletons, graph extraction and APLS plumbing.

Coordinates are pixel-frame ``(x, y) = (col, row)`` unless a caller maps
them (e.g. through a :class:`~pplinknet.geo.GeoTransform`) beforehand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .raster import binarize

__all__ = [
    "Edge",
    "SpatialGraph",
    "UnknownNode",
    "skeletonize",
    "skeleton_to_graph",
    "mask_to_graph",
    "douglas_peucker",
    "polyline_length",
    "inject_control_nodes",
    "snap_node",
    "shortest_path_length",
    "path_lengths",
]


class UnknownNode(KeyError):
    pass


def polyline_length(coords) -> float:
    c = np.asarray(coords, dtype=np.float64)
    if len(c) < 2:
        return 0.0
    return float(np.hypot(*np.diff(c, axis=0).T).sum())


@dataclass
class Edge:
    u: int
    v: int
    coords: np.ndarray
    length: float


class SpatialGraph:
    """Undirected multigraph with planar node positions and polyline edges."""

    def __init__(self):
        self.nodes: dict[int, tuple[float, float]] = {}
        self.edges: dict[int, Edge] = {}
        self.incident: dict[int, set[int]] = {}
        self._next_node = 0
        self._next_edge = 0

    # -- construction ------------------------------------------------------

    def add_node(self, x: float, y: float, node_id: int | None = None) -> int:
        if node_id is None:
            node_id = self._next_node
        elif node_id in self.nodes:
            raise ValueError(f"node {node_id} already exists")
        self.nodes[node_id] = (float(x), float(y))
        self.incident[node_id] = set()
        self._next_node = max(self._next_node, node_id + 1)
        return node_id

    def add_edge(self, u: int, v: int, coords=None) -> int:
        for n in (u, v):
            if n not in self.nodes:
                raise UnknownNode(n)
        if coords is None:
            coords = [self.nodes[u], self.nodes[v]]
        coords = np.array(coords, dtype=np.float64).reshape(-1, 2)
        # endpoints always sit exactly on their nodes
        coords[0] = self.nodes[u]
        coords[-1] = self.nodes[v]
        length = polyline_length(coords)
        if u == v and length == 0.0:
            raise ValueError("zero-length self-loop")
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = Edge(u, v, coords, length)
        self.incident[u].add(eid)
        self.incident[v].add(eid)
        return eid

    def remove_edge(self, eid: int) -> Edge:
        e = self.edges.pop(eid)
        self.incident[e.u].discard(eid)
        self.incident[e.v].discard(eid)
        return e

    def remove_node(self, n: int) -> None:
        for eid in list(self.incident[n]):
            self.remove_edge(eid)
        del self.incident[n]
        del self.nodes[n]

    def copy(self) -> "SpatialGraph":
        g = SpatialGraph()
        g.nodes = dict(self.nodes)
        g.edges = {k: Edge(e.u, e.v, e.coords.copy(), e.length) for k, e in self.edges.items()}
        g.incident = {k: set(v) for k, v in self.incident.items()}
        g._next_node, g._next_edge = self._next_node, self._next_edge
        return g

    @classmethod
    def from_segments(cls, points, pairs) -> "SpatialGraph":
        """Straight-edge graph from node positions and index pairs."""
        g = cls()
        for x, y in points:
            g.add_node(x, y)
        for u, v in pairs:
            g.add_edge(int(u), int(v))
        return g

    # -- queries -----------------------------------------------------------

    def degree(self, n: int) -> int:
        return sum(2 if self.edges[e].u == self.edges[e].v else 1 for e in self.incident[n])

    def neighbours(self, n: int) -> list[int]:
        out = []
        for eid in sorted(self.incident[n]):
            e = self.edges[eid]
            out.append(e.v if e.u == n else e.u)
        return out

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges.values()))

    def __len__(self) -> int:
        return len(self.nodes)

    def map_coords(self, fn: Callable[[np.ndarray], np.ndarray]) -> "SpatialGraph":
        """New graph with every coordinate passed through ``fn`` (``(k, 2) -> (k, 2)``)."""
        g = SpatialGraph()
        for n, p in self.nodes.items():
            q = fn(np.array([p], dtype=np.float64))[0]
            g.add_node(q[0], q[1], node_id=n)
        for eid in sorted(self.edges):
            e = self.edges[eid]
            g.add_edge(e.u, e.v, fn(e.coords))
        return g

    def relabel(self) -> "SpatialGraph":
        """Copy with nodes and edges renumbered 0..n-1 in current id order."""
        g = SpatialGraph()
        remap = {}
        for n in sorted(self.nodes):
            remap[n] = g.add_node(*self.nodes[n])
        for eid in sorted(self.edges):
            e = self.edges[eid]
            g.add_edge(remap[e.u], remap[e.v], e.coords)
        return g

    # -- GeoJSON -----------------------------------------------------------

    def to_geojson(self) -> str:
        feats = []
        for eid in sorted(self.edges):
            e = self.edges[eid]
            feats.append({
                "type": "Feature",
                "properties": {"u": e.u, "v": e.v, "length": e.length},
                "geometry": {"type": "LineString", "coordinates": e.coords.tolist()},
            })
        isolated = [n for n in sorted(self.nodes) if not self.incident[n]]
        for n in isolated:
            feats.append({
                "type": "Feature",
                "properties": {"node": n},
                "geometry": {"type": "Point", "coordinates": list(self.nodes[n])},
            })
        return json.dumps({"type": "FeatureCollection", "features": feats})

    @classmethod
    def from_geojson(cls, text: str) -> "SpatialGraph":
        """Read a LineString collection; ``u``/``v`` properties name the end nodes.

        Without ``u``/``v``, endpoints with identical coordinates are merged.
        """
        from .vector import ParseError

        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
            raise ParseError("graph file must be a GeoJSON FeatureCollection")
        g = cls()
        by_coord: dict[tuple[float, float], int] = {}

        def node_for(props_key, props, xy):
            xy = (float(xy[0]), float(xy[1]))
            if props_key in props:
                n = int(props[props_key])
                if n not in g.nodes:
                    g.add_node(*xy, node_id=n)
                return n
            if xy not in by_coord:
                by_coord[xy] = g.add_node(*xy, node_id=max(g.nodes, default=-1) + 1)
            return by_coord[xy]

        for feat in doc.get("features", []):
            geom = feat.get("geometry") or {}
            props = feat.get("properties") or {}
            if geom.get("type") == "Point":
                n = int(props.get("node", max(g.nodes, default=-1) + 1))
                if n not in g.nodes:
                    g.add_node(*geom["coordinates"][:2], node_id=n)
                continue
            if geom.get("type") != "LineString":
                continue
            coords = np.asarray(geom["coordinates"], dtype=np.float64)[:, :2]
            if len(coords) < 2:
                raise ParseError("graph LineString needs >= 2 points")
            u = node_for("u", props, coords[0])
            v = node_for("v", props, coords[-1])
            g.add_edge(u, v, coords)
        return g


# --------------------------------------------------------------------------
# skeletonisation

# neighbour offsets P2..P9, clockwise from north
_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def _build_simple_lut() -> np.ndarray:
    """Simple-point table for 8-connected foreground / 4-connected background.

    Bit ``k`` of the index is neighbour ``P(k+2)``.
    """
    pos = _OFFSETS
    adj8 = [[j for j in range(8) if j != i and max(abs(pos[i][0] - pos[j][0]), abs(pos[i][1] - pos[j][1])) == 1]
            for i in range(8)]
    adj4 = [[j for j in range(8) if abs(pos[i][0] - pos[j][0]) + abs(pos[i][1] - pos[j][1]) == 1]
            for i in range(8)]
    four = {0, 2, 4, 6}

    def components(members, adj):
        seen, comps = set(), []
        for s in members:
            if s in seen:
                continue
            stack, comp = [s], set()
            while stack:
                k = stack.pop()
                if k in comp:
                    continue
                comp.add(k)
                stack.extend(j for j in adj[k] if j in members and j not in comp)
            seen |= comp
            comps.append(comp)
        return comps

    lut = np.zeros(256, dtype=bool)
    for code in range(256):
        fg = {k for k in range(8) if code >> k & 1}
        bg = set(range(8)) - fg
        n_fg = len(components(fg, adj8))
        n_bg = sum(1 for c in components(bg, adj4) if c & four)
        lut[code] = n_fg == 1 and n_bg == 1
    return lut


_SIMPLE = _build_simple_lut()


def _build_zs_lut(step: int) -> np.ndarray:
    """Zhang-Suen deletion test per neighbour code for one sub-iteration."""
    lut = np.zeros(256, dtype=bool)
    for code in range(256):
        p = [code >> k & 1 for k in range(8)]  # P2..P9
        n = sum(p)
        trans = sum(1 for k in range(8) if p[k] == 0 and p[(k + 1) % 8] == 1)
        p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
        if step == 0:
            c3, c4 = p2 * p4 * p6 == 0, p4 * p6 * p8 == 0
        else:
            c3, c4 = p2 * p4 * p8 == 0, p2 * p6 * p8 == 0
        lut[code] = 2 <= n <= 6 and trans == 1 and c3 and c4
    return lut


_ZS_OK = (_build_zs_lut(0), _build_zs_lut(1))

_WEIGHTS = 1 << np.arange(8)


def _neighbour_stack(img: np.ndarray) -> np.ndarray:
    """``(8, h, w)`` neighbour planes P2..P9 for a zero-padded image."""
    p = np.pad(img, 1)
    h, w = img.shape
    return np.stack([p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] for dr, dc in _OFFSETS])


def _code_at(img: np.ndarray, r: int, c: int) -> int:
    h, w = img.shape
    code = 0
    for k, (dr, dc) in enumerate(_OFFSETS):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
            code |= 1 << k
    return code


def skeletonize(mask) -> np.ndarray:
    """Zhang-Suen thinning to a one-pixel-wide 8-connected skeleton.

    Returns a ``{0, 255}`` uint8 array. Each parallel sub-iteration's
    deletions are confirmed against a simple-point table, so strokes two
    pixels thick (which plain Zhang-Suen erases) keep their connectivity,
    though such a stroke's dead end still erodes back as in the original.
    """
    img = binarize(mask).astype(np.uint8)
    while True:
        changed = False
        for step in (0, 1):
            nb = _neighbour_stack(img)
            p2, p3, p4, p5, p6, p7, p8, p9 = nb
            count = nb.sum(axis=0)
            ring = np.concatenate([nb, nb[:1]])
            transitions = ((ring[:-1] == 0) & (ring[1:] == 1)).sum(axis=0)
            if step == 0:
                c3 = (p2 * p4 * p6) == 0
                c4 = (p4 * p6 * p8) == 0
            else:
                c3 = (p2 * p4 * p8) == 0
                c4 = (p2 * p6 * p8) == 0
            cand = (img == 1) & (count >= 2) & (count <= 6) & (transitions == 1) & c3 & c4
            if not cand.any():
                continue
            codes = np.tensordot(_WEIGHTS, nb, axes=1)
            cand &= _SIMPLE[codes]
            # candidates with no candidate neighbour cannot interact
            cand_nb = _neighbour_stack(cand.astype(np.uint8)).sum(axis=0)
            free = cand & (cand_nb == 0)
            img[free] = 0
            changed |= bool(free.any())
            for r, c in zip(*np.nonzero(cand & ~free)):
                code = _code_at(img, r, c)
                if _SIMPLE[code] and _ZS_OK[step][code]:
                    img[r, c] = 0
                    changed = True
        if not changed:
            break
    return img * np.uint8(255)


# --------------------------------------------------------------------------
# skeleton -> graph


def douglas_peucker(coords, tol: float) -> np.ndarray:
    """Ramer-Douglas-Peucker simplification keeping both endpoints."""
    pts = np.asarray(coords, dtype=np.float64)
    if tol <= 0 or len(pts) < 3:
        return pts.copy()
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = pts[i], pts[j]
        seg = pts[i + 1 : j]
        ab = b - a
        n2 = ab @ ab
        if n2 == 0.0:
            d = np.hypot(*(seg - a).T)
        else:
            t = np.clip((seg - a) @ ab / n2, 0.0, 1.0)
            d = np.hypot(*(a + t[:, None] * ab - seg).T)
        k = int(np.argmax(d))
        if d[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return pts[keep]


def _thin_corners(img: np.ndarray) -> None:
    """Drop staircase corner pixels so path pixels have exactly two neighbours."""
    rows, cols = np.nonzero(img)
    perpendicular = ((0, 2), (2, 4), (4, 6), (6, 0))
    for r, c in zip(rows, cols):
        if not img[r, c]:
            continue
        code = _code_at(img, r, c)
        if bin(code).count("1") < 2 or not _SIMPLE[code]:
            continue
        if any(code >> a & 1 and code >> b & 1 for a, b in perpendicular):
            img[r, c] = 0


def _merge_degree_two(g: SpatialGraph, protect: set[int] = frozenset()) -> bool:
    changed = False
    for n in sorted(g.nodes):
        if n in protect or n not in g.nodes:
            continue
        inc = sorted(g.incident[n])
        if len(inc) != 2:
            continue
        e1, e2 = g.edges[inc[0]], g.edges[inc[1]]
        if e1.u == e1.v or e2.u == e2.v:
            continue
        c1 = e1.coords if e1.v == n else e1.coords[::-1]
        c2 = e2.coords if e2.u == n else e2.coords[::-1]
        a = e1.u if e1.v == n else e1.v
        b = e2.v if e2.u == n else e2.u
        if a == b and a == n:
            continue
        coords = np.concatenate([c1, c2[1:]])
        g.remove_node(n)
        g.add_edge(a, b, coords)
        changed = True
    return changed


def skeleton_to_graph(skel, spur_px: float = 8.0, simplify_tol: float = 2.0) -> SpatialGraph:
    """Trace a one-pixel skeleton into a :class:`SpatialGraph`.

    Endpoints and junction clusters become nodes (a junction cluster sits at
    its pixels' centroid); runs of two-neighbour pixels become polyline
    edges. Spurs shorter than ``spur_px`` hanging off junctions are pruned,
    then edges are Douglas-Peucker simplified at ``simplify_tol`` with their
    lengths recomputed from the simplified geometry.
    """
    img = binarize(skel).astype(np.uint8)
    _thin_corners(img)
    h, w = img.shape
    count = _neighbour_stack(img).sum(axis=0) * img
    node_px = (img == 1) & (count != 2)
    labels, n_clusters = ndimage.label(node_px, structure=np.ones((3, 3), dtype=int))

    g = SpatialGraph()
    cluster_node = {}
    if n_clusters:
        centres = ndimage.center_of_mass(node_px, labels, range(1, n_clusters + 1))
        for lab, (cy, cx) in enumerate(centres, start=1):
            cluster_node[lab] = g.add_node(cx, cy)

    def fg_neighbours(r, c):
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
                yield rr, cc

    visited = np.zeros_like(img, dtype=bool)

    def trace(start, first, start_node):
        path = [start, first]
        if labels[first]:
            return path, cluster_node[labels[first]]
        visited[first] = True
        prev, cur = start, first
        while True:
            nxt = [q for q in fg_neighbours(*cur) if q != prev]
            if not nxt:
                return path, None
            q = nxt[0]
            path.append(q)
            if labels[q]:
                return path, cluster_node[labels[q]]
            if visited[q]:
                return path, start_node if q == start else None
            visited[q] = True
            prev, cur = cur, q

    def add_traced(a, b, path):
        pts = np.array([(c, r) for r, c in path], dtype=np.float64)
        pts[0] = g.nodes[a]
        pts[-1] = g.nodes[b]
        if a == b and polyline_length(pts) < max(spur_px, 1e-9):
            return
        g.add_edge(a, b, pts)

    for r, c in zip(*np.nonzero(node_px)):
        a = cluster_node[labels[r, c]]
        for q in fg_neighbours(r, c):
            if labels[q] or visited[q]:
                continue
            path, b = trace((r, c), q, a)
            if b is not None:
                add_traced(a, b, path)

    # cycles with no endpoint or junction get one anchor node
    for r, c in zip(*np.nonzero((img == 1) & ~node_px & ~visited)):
        if visited[r, c]:
            continue
        a = g.add_node(float(c), float(r))
        visited[r, c] = True
        first = next(fg_neighbours(r, c))
        path, b = trace((r, c), first, a)
        if b == a:
            path[-1] = (r, c)
            add_traced(a, a, path)

    _merge_degree_two(g)
    _prune(g, spur_px)
    if simplify_tol > 0:
        for e in g.edges.values():
            e.coords = _simplify(e.coords, simplify_tol, e.u == e.v)
            e.length = polyline_length(e.coords)
    for eid in [eid for eid, e in g.edges.items() if e.u == e.v and e.length < max(spur_px, 1e-9)]:
        g.remove_edge(eid)
    for n in [n for n in g.nodes if not g.incident[n]]:
        g.remove_node(n)
    return g.relabel()


def _simplify(coords: np.ndarray, tol: float, closed: bool) -> np.ndarray:
    """Douglas-Peucker; a closed loop is split at its farthest vertex first."""
    if not closed or len(coords) < 3:
        return douglas_peucker(coords, tol)
    far = int(np.argmax(np.hypot(*(coords - coords[0]).T)))
    if far == 0:
        return coords[[0, -1]]
    a = douglas_peucker(coords[: far + 1], tol)
    b = douglas_peucker(coords[far:], tol)
    return np.concatenate([a, b[1:]])


def _prune(g: SpatialGraph, spur_px: float) -> None:
    while True:
        changed = False
        for eid in sorted(g.edges):
            if eid not in g.edges:
                continue
            e = g.edges[eid]
            if e.u == e.v or e.length >= spur_px:
                continue
            du, dv = g.degree(e.u), g.degree(e.v)
            if (du == 1 and dv >= 3) or (dv == 1 and du >= 3):
                tip = e.u if du == 1 else e.v
                g.remove_node(tip)
                changed = True
        changed |= _merge_degree_two(g)
        if not changed:
            break
    # drop tiny isolated pieces
    for eid in sorted(g.edges):
        e = g.edges.get(eid)
        if e is not None and e.u != e.v and g.degree(e.u) == 1 and g.degree(e.v) == 1 and e.length < spur_px:
            g.remove_node(e.u)
            g.remove_node(e.v)
    for n in [n for n in g.nodes if not g.incident[n]]:
        g.remove_node(n)


def mask_to_graph(mask, spur_px: float = 8.0, simplify_tol: float = 2.0) -> SpatialGraph:
    return skeleton_to_graph(skeletonize(mask), spur_px, simplify_tol)


# --------------------------------------------------------------------------
# control nodes and snapping


def _cumulative(coords: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(coords, axis=0).T))])


def _split_polyline(coords: np.ndarray, cuts: Iterable[float]) -> list[np.ndarray]:
    """Cut a polyline at increasing arc-length positions strictly inside it."""
    cum = _cumulative(coords)
    pieces, current, seg = [], [coords[0]], 0
    for s in cuts:
        while seg < len(coords) - 2 and cum[seg + 1] < s:
            seg += 1
            current.append(coords[seg])
        span = cum[seg + 1] - cum[seg]
        t = 0.0 if span == 0 else (s - cum[seg]) / span
        p = coords[seg] + t * (coords[seg + 1] - coords[seg])
        current.append(p)
        pieces.append(np.array(current))
        current = [p]
    current.extend(coords[seg + 1 :])
    pieces.append(np.array(current))
    return pieces


def _split_edge(g: SpatialGraph, eid: int, cuts: list[float]) -> list[int]:
    """Replace an edge by pieces joined at new nodes; returns the new node ids."""
    e = g.remove_edge(eid)
    pieces = _split_polyline(e.coords, cuts)
    new_nodes = [g.add_node(*piece[-1]) for piece in pieces[:-1]]
    chain = [e.u] + new_nodes + [e.v]
    for a, b, piece in zip(chain[:-1], chain[1:], pieces):
        g.add_edge(a, b, piece)
    return new_nodes


def inject_control_nodes(g: SpatialGraph, spacing: float = 50.0) -> SpatialGraph:
    """Subdivide every edge longer than ``spacing`` at equal arc-length steps."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    out = g.copy()
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.length <= spacing:
            continue
        k = math.ceil(e.length / spacing) - 1
        step = e.length / (k + 1)
        _split_edge(out, eid, [step * i for i in range(1, k + 1)])
    return out


def _project(coords: np.ndarray, p: np.ndarray):
    """Closest point on a polyline: ``(distance, arc position, point)``."""
    a = coords[:-1]
    ab = coords[1:] - a
    n2 = (ab * ab).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(n2 > 0, ((p - a) * ab).sum(axis=1) / n2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * ab
    d = np.hypot(*(q - p).T)
    k = int(np.argmin(d))
    cum = _cumulative(coords)
    return float(d[k]), float(cum[k] + t[k] * np.sqrt(n2[k])), q[k]


def snap_node(g: SpatialGraph, point, buffer: float = 4.0, tol: float = 1e-9) -> int | None:
    """Project ``point`` onto the nearest edge within ``buffer``.

    A projection landing on an edge endpoint selects that node; otherwise the
    edge is split and the new node returned. Ties go to the lowest edge id.
    With no edge in reach, the nearest node within ``buffer`` (an isolated
    node) is returned, else ``None``. ``g`` is modified in place.
    """
    if buffer <= 0:
        raise ValueError("buffer must be positive")
    p = np.asarray(point, dtype=np.float64)
    best = None
    for eid in sorted(g.edges):
        d, s, _ = _project(g.edges[eid].coords, p)
        if best is None or d < best[0]:
            best = (d, eid, s)
    if best is not None and best[0] <= buffer:
        _, eid, s = best
        e = g.edges[eid]
        if s <= tol:
            return e.u
        if s >= e.length - tol:
            return e.v
        return _split_edge(g, eid, [s])[0]
    nearest = None
    for n in sorted(g.nodes):
        d = math.hypot(g.nodes[n][0] - p[0], g.nodes[n][1] - p[1])
        if d <= buffer and (nearest is None or d < nearest[0]):
            nearest = (d, n)
    return None if nearest is None else nearest[1]


# --------------------------------------------------------------------------
# shortest paths


def _csgraph(g: SpatialGraph):
    ids = sorted(g.nodes)
    index = {n: i for i, n in enumerate(ids)}
    best: dict[tuple[int, int], float] = {}
    for e in g.edges.values():
        if e.u == e.v:
            continue
        a, b = sorted((index[e.u], index[e.v]))
        if (a, b) not in best or e.length < best[(a, b)]:
            best[(a, b)] = e.length
    if best:
        (rows, cols), vals = zip(*best.keys()), list(best.values())
    else:
        rows, cols, vals = (), (), []
    n = len(ids)
    mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
    return mat, index


def path_lengths(g: SpatialGraph, sources) -> dict[int, dict[int, float]]:
    """Dijkstra distances ``{source: {node: length}}`` (unreachable omitted)."""
    sources = list(sources)
    for s in sources:
        if s not in g.nodes:
            raise UnknownNode(s)
    if not sources:
        return {}
    mat, index = _csgraph(g)
    ids = sorted(g.nodes)
    dist = dijkstra(mat, directed=False, indices=[index[s] for s in sources])
    out = {}
    for s, row in zip(sources, np.atleast_2d(dist)):
        out[s] = {ids[i]: float(v) for i, v in enumerate(row) if np.isfinite(v)}
    return out


def shortest_path_length(g: SpatialGraph, a: int, b: int) -> float | None:
    if b not in g.nodes:
        raise UnknownNode(b)
    return path_lengths(g, [a])[a].get(b)
