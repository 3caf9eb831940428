import csv
import io
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (brute_iou, exhaustive_matches, oracle_apls, perturb, random_building_fixture,
                     random_graph)
from pplinknet.graph import SpatialGraph
from pplinknet.metrics import (EmptyInput, apls, building_f1, confusion, iou, mean_iou, metrics_csv,
                               threshold)
from pplinknet.nn.functional import ShapeMismatch


def as_graph(spec):
    return SpatialGraph.from_segments(*spec)


def rect_ring(r0, c0, r1, c1):
    """Pixel-space ring covering rows r0..r1 and cols c0..c1 inclusive."""
    return [(c0 - 0.5, r0 - 0.5), (c1 + 0.5, r0 - 0.5), (c1 + 0.5, r1 + 0.5), (c0 - 0.5, r1 + 0.5)]


# -- pixel metrics ---------------------------------------------------------------


def test_iou_trivial_cases():
    a = np.zeros((6, 6), np.uint8)
    a[1:4, 1:4] = 255
    b = np.zeros_like(a)
    b[4:, 4:] = 255
    assert iou(a, a) == 1.0 and iou(a, b) == 0.0
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


def test_iou_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.random((16, 16)) < rng.random()
        g = rng.random((16, 16)) < rng.random()
        assert iou(p, g) == brute_iou(p, g)
        c = confusion(p, g)
        assert c.tp + c.fp + c.fn + c.tn == 256


def test_iou_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        iou(np.zeros((3, 3)), np.zeros((3, 4)))


def test_mean_iou():
    a = np.ones((4, 4), bool)
    assert mean_iou([(a, a), (a, a)]) == 1.0
    assert mean_iou([(a, a), (a, ~a)]) == 0.5
    rng = np.random.default_rng(1)
    pairs = [(rng.random((8, 8)) < 0.5, rng.random((8, 8)) < 0.5) for _ in range(5)]
    assert mean_iou(pairs) == pytest.approx(sum(brute_iou(p, g) for p, g in pairs) / 5, abs=1e-12)
    with pytest.raises(EmptyInput):
        mean_iou([])


def test_threshold_is_strict():
    assert threshold(np.full((2, 2), 0.6)).tolist() == [[255, 255], [255, 255]]
    assert not threshold(np.full((2, 2), 0.5)).any()
    p = np.random.default_rng(2).random((5, 7))
    t = threshold(p, 0.3)
    assert all((t[r, c] == 255) == (p[r, c] > 0.3) for r in range(5) for c in range(7))


# -- APLS ------------------------------------------------------------------------


def test_apls_worked_example():
    gt = SpatialGraph()
    a, b = gt.add_node(0, 0), gt.add_node(8, 0)
    gt.add_edge(a, b, [(0, 0), (4, 3), (8, 0)])
    prop = SpatialGraph.from_segments([(0, 0), (8, 0)], [(0, 1)])
    rep = apls(gt, prop)
    assert rep.gt_to_prop == pytest.approx(0.8, abs=1e-12)
    assert rep.prop_to_gt == pytest.approx(0.75, abs=1e-12)
    assert rep.score == pytest.approx(0.775, abs=1e-12)
    assert rep.n_gt_to_prop == rep.n_prop_to_gt == 1


def test_apls_identical_and_empty(caplog):
    g = as_graph(([(0, 0), (30, 0), (30, 40)], [(0, 1), (1, 2)]))
    assert apls(g, g.copy()).score == 1.0
    with caplog.at_level(logging.WARNING):
        assert apls(g, SpatialGraph()).score == 0.0
    assert "no paths" in caplog.text
    assert apls(SpatialGraph(), SpatialGraph()).score == 1.0


def test_apls_matches_floyd_warshall_oracle():
    rng = np.random.default_rng(3)
    for _ in range(60):
        gt = random_graph(rng)
        prop = perturb(rng, *gt) if rng.random() < 0.7 else random_graph(rng)
        got = apls(as_graph(gt), as_graph(prop), spacing=12.0, buffer=4.0).score
        assert abs(got - oracle_apls(gt, prop, 12.0, 4.0)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 20.0))
def test_apls_symmetric_and_scale_free(seed, scale):
    rng = np.random.default_rng(seed)
    gt = random_graph(rng)
    prop = perturb(rng, *gt)
    g, p = as_graph(gt), as_graph(prop)
    s = apls(g, p, 12.0, 4.0).score
    assert 0.0 <= s <= 1.0
    assert apls(p, g, 12.0, 4.0).score == pytest.approx(s, abs=1e-12)
    gs = g.map_coords(lambda c: c * scale)
    ps = p.map_coords(lambda c: c * scale)
    assert apls(gs, ps, 12.0 * scale, 4.0 * scale).score == pytest.approx(s, abs=1e-9)
    if g.edges:
        assert apls(g, g.copy(), 12.0, 4.0).score == 1.0


# -- buildings -------------------------------------------------------------------


def test_buildings_perfect():
    rings = [rect_ring(1, 1, 4, 5), rect_ring(8, 2, 10, 9), rect_ring(2, 12, 9, 15)]
    pred = np.zeros((16, 18), np.uint8)
    for r0, c0, r1, c1 in [(1, 1, 4, 5), (8, 2, 10, 9), (2, 12, 9, 15)]:
        pred[r0 : r1 + 1, c0 : c1 + 1] = 255
    s = building_f1(pred, rings)
    assert (s.precision, s.recall, s.f1, s.matches) == (1.0, 1.0, 1.0, 3)


def test_buildings_no_predictions():
    s = building_f1(np.zeros((10, 10), np.uint8), [rect_ring(2, 2, 5, 5)])
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    both = building_f1(np.zeros((10, 10), np.uint8), [])
    assert both.f1 == 0.0


def test_two_preds_one_gt():
    pred = np.zeros((12, 12), np.uint8)
    pred[0:8, 0:10] = 255  # 80 of the gt's 100 pixels, IoU 0.8
    pred[9, 0:10] = 255  # separate strip, IoU 0.1
    for gt in ([rect_ring(0, 0, 9, 9)], np.pad(np.ones((10, 10), int), ((0, 2), (0, 2)))):
        s = building_f1(pred, gt)
        assert s.matches == 1 and s.n_pred == 2
        assert s.precision == 0.5 and s.recall == 1.0
        assert s.f1 == pytest.approx(2 / 3, abs=1e-15)


def test_greedy_matches_exhaustive_oracle():
    rng = np.random.default_rng(4)
    for _ in range(60):
        pred, labels, k = random_building_fixture(rng)
        s = building_f1(pred, labels)
        want, n_pred = exhaustive_matches(pred, [labels == j for j in range(1, k + 1)], 0.5)
        assert (s.matches, s.n_pred, s.n_gt) == (want, n_pred, k)
        assert s.matches <= min(s.n_pred, s.n_gt)


def test_metrics_csv_layout():
    text = metrics_csv([
        {"image_id": "a", "iou": 1.0, "apls": 0.5, "precision": None},
        {"image_id": "b", "iou": 0.5, "apls": None},
    ])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["image_id", "iou", "apls", "precision", "recall", "f1"]
    assert rows[1] == ["a", "1.000000", "0.500000", "", "", ""]
    assert rows[-1] == ["summary", "0.750000", "0.500000", "", "", ""]
