import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from pplinknet.graph import (SpatialGraph, UnknownNode, douglas_peucker, inject_control_nodes,
                             mask_to_graph, path_lengths, shortest_path_length, skeleton_to_graph,
                             skeletonize, snap_node)
from pplinknet.raster import draw_polyline
from pplinknet.vector import ParseError

EIGHT = np.ones((3, 3), dtype=int)


def n_components(mask):
    return ndimage.label(np.asarray(mask) > 0, structure=EIGHT)[1]


def graph_components(g):
    parent = {n: n for n in g.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in g.edges.values():
        parent[find(e.u)] = find(e.v)
    return len({find(n) for n in g.nodes})


def plus_sign(size=41, half=15, width=5):
    m = np.zeros((size, size), np.uint8)
    c = size // 2
    m[c - width // 2 : c + width // 2 + 1, c - half : c + half + 1] = 255
    m[c - half : c + half + 1, c - width // 2 : c + width // 2 + 1] = 255
    return m


def blob_masks(count, seed, size=48):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m = np.zeros((size, size), np.uint8)
        for _ in range(rng.integers(1, 4)):
            pts = rng.uniform(2, size - 3, (rng.integers(2, 4), 2))
            draw_polyline(m, pts, int(rng.integers(2, 6)))
        yield m


# -- skeletonize -------------------------------------------------------------


def test_bar_thins_to_centre_line():
    m = np.zeros((15, 30), np.uint8)
    m[5:10, 3:27] = 255
    sk = skeletonize(m) > 0
    rows, cols = np.nonzero(sk)
    assert set(rows) == {7}
    assert cols.min() <= 3 + 2 and cols.max() >= 26 - 2
    assert sk.sum() == cols.max() - cols.min() + 1


def test_empty_mask():
    assert not skeletonize(np.zeros((8, 8), np.uint8)).any()
    g = mask_to_graph(np.zeros((8, 8), np.uint8))
    assert len(g.nodes) == 0 and len(g.edges) == 0


def test_plus_sign_has_one_junction_cluster():
    sk = skeletonize(plus_sign()) > 0
    count = ndimage.convolve(sk.astype(int), EIGHT, mode="constant") - sk
    junction = sk & (count >= 3)
    assert n_components(junction) == 1


def test_skeleton_properties_on_random_masks():
    for m in blob_masks(30, 0):
        sk = skeletonize(m)
        assert np.all((sk > 0) <= (m > 0))
        assert np.array_equal(skeletonize(sk), sk)
        assert n_components(sk) == n_components(m)


# -- skeleton_to_graph --------------------------------------------------------


def test_straight_line_graph():
    sk = np.zeros((10, 30), np.uint8)
    sk[4, 5:25] = 255
    g = skeleton_to_graph(sk)
    assert len(g.nodes) == 2 and len(g.edges) == 1
    assert abs(g.total_length - 19) < 0.01


def test_diagonal_line_length():
    sk = np.zeros((30, 30), np.uint8)
    for i in range(20):
        sk[5 + i, 5 + i] = 255
    g = skeleton_to_graph(sk, simplify_tol=0)
    assert abs(g.total_length - 19 * math.sqrt(2)) < 0.5


def test_plus_sign_graph():
    g = mask_to_graph(plus_sign())
    degrees = sorted(g.degree(n) for n in g.nodes)
    assert degrees == [1, 1, 1, 1, 4] and len(g.edges) == 4


def test_ring_keeps_an_anchor():
    m = np.zeros((40, 40), np.uint8)
    yy, xx = np.mgrid[:40, :40]
    r = np.hypot(yy - 20, xx - 20)
    m[(r >= 10) & (r <= 13)] = 255
    g = mask_to_graph(m)
    assert len(g.nodes) == 1 and len(g.edges) == 1
    e = next(iter(g.edges.values()))
    assert e.u == e.v and 2 * math.pi * 10 < e.length < 2 * math.pi * 13


def test_tiny_loop_with_spurs_does_not_leave_zero_loop():
    sk = np.zeros((14, 14), np.uint8)
    for r, c in [(5, 6), (6, 7), (7, 6), (6, 5), (4, 6), (3, 6), (2, 6), (8, 6), (9, 6), (10, 6)]:
        sk[r, c] = 255
    g = skeleton_to_graph(sk)
    assert all(e.length > 0 for e in g.edges.values())


def test_graph_invariants_on_random_masks():
    for m in blob_masks(40, 1):
        g = mask_to_graph(m)
        for e in g.edges.values():
            chord = math.dist(g.nodes[e.u], g.nodes[e.v])
            assert e.length >= chord - 1e-9 and e.length > 0
            assert np.allclose(e.coords[0], g.nodes[e.u]) and np.allclose(e.coords[-1], g.nodes[e.v])


def test_component_count_preserved():
    # strokes long enough that no component falls under the spur length
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = np.zeros((64, 64), np.uint8)
        for _ in range(rng.integers(1, 4)):
            while True:
                a, b = rng.uniform(4, 60, (2, 2))
                if np.hypot(*(a - b)) > 20:
                    break
            draw_polyline(m, [a, b], 3)
        assert graph_components(mask_to_graph(m)) == n_components(m)


def test_douglas_peucker_keeps_endpoints_and_corners():
    pts = [(0, 0), (1, 0.1), (2, -0.1), (3, 0), (3, 5)]
    out = douglas_peucker(pts, 0.5)
    assert out.tolist() == [[0, 0], [3, 0], [3, 5]]
    assert douglas_peucker(pts, 0).tolist() == np.asarray(pts, float).tolist()


# -- control nodes and snapping ---------------------------------------------


def line_graph(length, n_pts=2):
    xs = np.linspace(0, length, n_pts)
    g = SpatialGraph()
    a, b = g.add_node(0, 0), g.add_node(length, 0)
    g.add_edge(a, b, np.c_[xs, np.zeros(n_pts)])
    return g


def test_inject_120_at_50():
    g = inject_control_nodes(line_graph(120.0), 50.0)
    assert len(g.nodes) == 4 and len(g.edges) == 3
    assert all(e.length <= 50 for e in g.edges.values())
    assert g.total_length == pytest.approx(120.0, abs=1e-9)


def test_inject_short_edge_unchanged():
    g = line_graph(10.0)
    out = inject_control_nodes(g, 50.0)
    assert out.nodes == g.nodes and len(out.edges) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 200), st.floats(0, 200)), min_size=2, max_size=6, unique=True),
       st.floats(3, 80))
def test_inject_conserves_length(pts, spacing):
    g = SpatialGraph()
    ids = [g.add_node(x, y) for x, y in pts]
    for a, b in zip(ids, ids[1:]):
        if g.nodes[a] != g.nodes[b]:
            g.add_edge(a, b)
    out = inject_control_nodes(g, spacing)
    assert abs(out.total_length - g.total_length) <= 1e-9 * max(1.0, g.total_length)
    assert all(e.length <= spacing + 1e-9 for e in out.edges.values())
    assert graph_components(out) == graph_components(g)


def test_snap_interior_splits_edge():
    g = line_graph(10.0)
    n = snap_node(g, (3.0, 1.0), buffer=4.0)
    assert g.nodes[n] == (3.0, 0.0) and len(g.edges) == 2
    assert sorted(round(e.length, 12) for e in g.edges.values()) == [3.0, 7.0]
    assert g.total_length == pytest.approx(10.0, abs=1e-9)


def test_snap_out_of_reach():
    g = line_graph(10.0)
    assert snap_node(g, (5.0, 6.0), buffer=4.0) is None
    assert len(g.edges) == 1


def test_snap_endpoint_returns_node():
    g = line_graph(10.0)
    assert snap_node(g, (-1.0, 0.5), buffer=4.0) == 0


def test_snap_tie_goes_to_lower_edge_id():
    g = SpatialGraph()
    a, b, c, d = g.add_node(0, 0), g.add_node(10, 0), g.add_node(0, 2), g.add_node(10, 2)
    low = g.add_edge(c, d)
    g.add_edge(a, b)
    n = snap_node(g, (5.0, 1.0), buffer=4.0)
    assert g.nodes[n] == (5.0, 2.0)
    assert low not in g.edges


def test_snap_isolated_node():
    g = SpatialGraph()
    n = g.add_node(1, 1)
    assert snap_node(g, (2, 2), buffer=2.0) == n


# -- shortest paths ------------------------------------------------------------


def triangle():
    g = SpatialGraph()
    a, m, b = g.add_node(0, 0), g.add_node(3, 0), g.add_node(3, 4)
    g.add_edge(a, m)
    g.add_edge(m, b)
    # a detour polyline of length 10 between the far pair
    g.add_edge(a, b, [(0, 0), (-1.5, 0), (-1.5, 4), (3, 4)])
    return g, a, m, b


def test_triangle_paths():
    g, a, m, b = triangle()
    assert [e.length for e in g.edges.values()] == [3.0, 4.0, 10.0]
    assert shortest_path_length(g, a, b) == 7.0
    assert shortest_path_length(g, a, a) == 0.0


def test_disconnected_and_unknown():
    g = line_graph(5.0)
    c = g.add_node(20, 20)
    assert shortest_path_length(g, 0, c) is None
    with pytest.raises(UnknownNode):
        shortest_path_length(g, 0, 99)


def test_parallel_edges_use_shortest():
    g = SpatialGraph()
    a, b = g.add_node(0, 0), g.add_node(4, 0)
    g.add_edge(a, b, [(0, 0), (2, 3), (4, 0)])
    g.add_edge(a, b)
    assert shortest_path_length(g, a, b) == 4.0


def test_triangle_inequality():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 50, (9, 2))
    pairs = [(i, j) for i, j in itertools.combinations(range(9), 2) if rng.random() < 0.4]
    g = SpatialGraph.from_segments(pts, pairs)
    d = path_lengths(g, list(g.nodes))
    for a, b, c in itertools.permutations(g.nodes, 3):
        if b in d[a] and c in d[b]:
            assert d[a][c] <= d[a][b] + d[b][c] + 1e-9


# -- GeoJSON -------------------------------------------------------------------


def test_geojson_round_trip():
    g, *_ = triangle()
    g.add_node(50, 50)
    back = SpatialGraph.from_geojson(g.to_geojson())
    assert back.nodes == g.nodes
    assert [(e.u, e.v, e.length) for e in back.edges.values()] == [(e.u, e.v, e.length) for e in g.edges.values()]


def test_geojson_without_ids_merges_endpoints():
    text = ('{"type": "FeatureCollection", "features": ['
            '{"type": "Feature", "properties": {}, "geometry": {"type": "LineString", "coordinates": [[0,0],[3,0]]}},'
            '{"type": "Feature", "properties": {}, "geometry": {"type": "LineString", "coordinates": [[3,0],[3,4]]}}]}')
    g = SpatialGraph.from_geojson(text)
    assert len(g.nodes) == 3 and shortest_path_length(g, 0, 2) == 7.0
    with pytest.raises(ParseError):
        SpatialGraph.from_geojson("[1, 2]")


def test_zero_length_self_loop_rejected():
    g = SpatialGraph()
    a = g.add_node(0, 0)
    with pytest.raises(ValueError):
        g.add_edge(a, a)
