"""Acceptance criteria 1-9, each recorded as one pass/fail line in the summary.

The slow training criteria (7 and 8) dominate the runtime: roughly 12 minutes
for criterion 7 and under a minute for criterion 8 on one CPU thread.
"""

import os
import time
from dataclasses import replace

import numpy as np

import acceptance_results
from oracles import (brute_fill, brute_iou, brute_line, exhaustive_matches, oracle_apls, perturb,
                     random_building_fixture, random_graph)
from pplinknet.cli import main
from pplinknet.geo import GeoTransform, read_world_file, write_world_file
from pplinknet.graph import SpatialGraph, mask_to_graph
from pplinknet.losses import bce, dice, focal, focal_per_pixel
from pplinknet.metrics import apls, building_f1, iou
from pplinknet.nn import ModelConfig
from pplinknet.nn.gradcheck import check_layers, check_losses, check_model
from pplinknet.raster import DegeneratePolygon, Raster, draw_polyline, fill_polygon, rasterize_layer, read_image, write_image
from pplinknet.synth import SynthConfig, make_dataset, make_tile
from pplinknet.train import TrainConfig, evaluate, poly_lr, single_thread, train_stage

MU = ModelConfig(base_width=8, encoder_stages=2, blocks_per_stage=2, pp_bins=(1, 2, 4, 8))


def record(n, ok, detail):
    acceptance_results.ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_gradient_certification():
    t0 = time.perf_counter()
    results = check_layers(0, 1e-6) + check_losses(0, 1e-6)
    model = check_model(0, 1e-4)
    seconds = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_error / r.tolerance)
    names = {r.name for r in results}
    needed = {"conv2d stride1 pad1", "conv_transpose2d k4 s2 p1", "batch_norm train", "max_pool2d",
              "bilinear_upsample", "pyramid_pooling_module", "loss bce", "loss focal", "loss dice",
              "loss bce_plus_dice"}
    ok = all(r.ok for r in results) and model.ok and needed <= names and seconds < 120
    record(1, ok, f"worst layer {worst.name} {worst.max_rel_error:.2e} (<1e-6), model "
                  f"{model.max_rel_error:.2e} (<1e-4), {seconds:.0f}s")


def test_criterion_2_loss_identities():
    rng = np.random.default_rng(2)
    worst_focal = 0.0
    for _ in range(100):
        shape = tuple(rng.integers(1, 9, 2))
        p = rng.uniform(0, 1, shape)
        g = (rng.random(shape) < rng.random()).astype(float)
        worst_focal = max(worst_focal, abs(focal(p, g, alpha=1.0, gamma=0.0)[0] - bce(p, g)[0]))
    dice_zero = all(dice(m, m)[0] == 0.0 for m in ((rng.random((2, 1, 8, 8)) < 0.5).astype(float) for _ in range(20)))
    bounded = True
    for _ in range(100):
        p = rng.uniform(0, 1, (8, 8))
        g = (rng.random((8, 8)) < 0.5).astype(float)
        alpha, gamma = rng.uniform(0.01, 1.0), rng.uniform(0.01, 5.0)
        pc = np.clip(p, 1e-7, 1 - 1e-7)
        per_bce = -(g * np.log(pc) + (1 - g) * np.log(1 - pc))
        bounded &= bool(np.all(focal_per_pixel(p, g, alpha, gamma) <= alpha * per_bce + 1e-15))
    record(2, worst_focal <= 1e-12 and dice_zero and bounded,
           f"focal-bce max diff {worst_focal:.1e}, dice(p=g)=0 {dice_zero}, focal<=a*bce {bounded}")


def test_criterion_3_poly_schedule():
    base = 2e-4
    half = abs(poly_lr(base, 50, 100, 0.9) - base * 0.5 ** 0.9)
    ok = poly_lr(base, 0, 100) == base and poly_lr(base, 100, 100) == 0.0 and half <= 1e-15
    record(3, ok, f"lr(0)={poly_lr(base, 0, 100)}, lr(max)={poly_lr(base, 100, 100)}, half-way error {half:.1e}")


def test_criterion_4_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    iou_ok = True
    for _ in range(1000):
        shape = tuple(rng.integers(1, 24, 2))
        p, g = rng.random(shape) < rng.random(), rng.random(shape) < rng.random()
        iou_ok &= iou(p, g) == brute_iou(p, g)
    worst, ident, empty = 0.0, True, True
    for _ in range(200):
        gt = random_graph(rng, max_nodes=8)
        prop = perturb(rng, *gt) if rng.random() < 0.7 else random_graph(rng, max_nodes=8)
        g, pg = SpatialGraph.from_segments(*gt), SpatialGraph.from_segments(*prop)
        worst = max(worst, abs(apls(g, pg, 12.0, 4.0).score - oracle_apls(gt, prop, 12.0, 4.0)))
        if g.edges:
            ident &= apls(g, g.copy(), 12.0, 4.0).score == 1.0
            empty &= apls(g, SpatialGraph(), 12.0, 4.0).score == 0.0
    f1_ok = True
    for _ in range(200):
        pred, labels, k = random_building_fixture(rng, max_gt=6)
        s = building_f1(pred, labels)
        want, n_pred = exhaustive_matches(pred, [labels == j for j in range(1, k + 1)], 0.5)
        f1_ok &= (s.matches, s.n_pred, s.n_gt) == (want, n_pred, k)
    seconds = time.perf_counter() - t0
    ok = iou_ok and worst <= 1e-9 and ident and empty and f1_ok and seconds < 120
    record(4, ok, f"iou exact {iou_ok}, apls max diff {worst:.1e}, apls(g,g)=1 {ident}, apls(g,empty)=0 {empty}, "
                  f"f1 greedy=exhaustive {f1_ok}, {seconds:.0f}s")


def test_criterion_5_rasterization_oracles(tmp_path):
    rng = np.random.default_rng(5)
    lines_ok = polys_ok = True
    polys = 0
    for _ in range(100):
        h, w = rng.integers(6, 20, 2)
        pts = [tuple(v) for v in rng.uniform(-3, max(h, w) + 3, (int(rng.integers(2, 5)), 2))]
        width = int(rng.integers(1, 8))
        m = np.zeros((h, w), np.uint8)
        draw_polyline(m, pts, width)
        lines_ok &= np.array_equal(m, brute_line(h, w, pts, width))
    while polys < 100:
        h, w = rng.integers(6, 20, 2)
        ring = [tuple(v) for v in rng.uniform(-2, max(h, w) + 2, (int(rng.integers(3, 8)), 2))]
        m = np.zeros((h, w), np.uint8)
        try:
            fill_polygon(m, ring)
        except DegeneratePolygon:
            continue
        polys += 1
        polys_ok &= np.array_equal(m, brute_fill(h, w, ring))
    trips = True
    for i in range(20):
        coeffs = rng.normal(0, 10, 6)
        gt = GeoTransform(*coeffs)
        write_world_file(gt, tmp_path / f"{i}.wld")
        trips &= read_world_file(tmp_path / f"{i}.wld") == gt
        rgb = rng.integers(0, 256, (int(rng.integers(1, 9)), int(rng.integers(1, 9)), 3), dtype=np.uint8)
        gray = rng.integers(0, 256, rgb.shape[:2], dtype=np.uint8)
        for name, data in ((f"{i}.ppm", rgb), (f"{i}.pgm", gray)):
            src = Raster(data, gt)
            write_image(tmp_path / name, src)
            back = read_image(tmp_path / name)
            trips &= np.array_equal(back.data, src.data) and back.data.dtype == np.uint8 and back.geo == gt
            again = tmp_path / ("again_" + name)
            write_image(again, back)
            trips &= again.read_bytes() == (tmp_path / name).read_bytes()
    record(5, lines_ok and polys_ok and trips,
           f"polylines exact {lines_ok}, polygons exact {polys_ok}, world-file and PGM/PPM round trips {trips}")


def test_criterion_6_pipeline_round_trip():
    t0 = time.perf_counter()
    cfg = SynthConfig(size=256, road_width=5)
    scores = []
    for i in range(20):
        t = make_tile(7, i, cfg)
        mask = rasterize_layer(t.layer, t.geo, 256, 256, {"residential": 5}).plane
        scores.append(apls(t.graph, mask_to_graph(mask)).score)
    seconds = time.perf_counter() - t0
    median = float(np.median(scores))
    record(6, median >= 0.90 and seconds < 60,
           f"median APLS {median:.3f} (>=0.90), min {min(scores):.3f}, {seconds:.0f}s")


def test_criterion_7_two_stage_transfer():
    t0 = time.perf_counter()
    pseudo = make_dataset(500, seed=100, pseudo=True)
    pool = make_dataset(100, seed=200)
    held = make_dataset(48, seed=300)
    kw = dict(spacing=16.0, buffer=4.0)
    two, scratch = [], []
    with single_thread():
        for seed in (0, 1, 2):
            clean = [pool[i] for i in np.random.default_rng(seed).permutation(100)[:25]]
            s1 = TrainConfig(base_lr=2e-3, epochs=10, batch_size=4, model=MU, seed=seed)
            s2 = TrainConfig(base_lr=2e-3, epochs=60, batch_size=4, model=MU, seed=seed)
            pre, _ = train_stage(pseudo, s1)
            tuned, _ = train_stage(clean, replace(s2, stage=2), model=pre)
            base, _ = train_stage(clean, s2)
            two.append(evaluate(tuned, held, with_apls=True, apls_kwargs=kw))
            scratch.append(evaluate(base, held, with_apls=True, apls_kwargs=kw))
    seconds = time.perf_counter() - t0
    m_two, m_scr = (float(np.median([r["miou"] for r in rs])) for rs in (two, scratch))
    a_two, a_scr = (float(np.median([r["apls"] for r in rs])) for rs in (two, scratch))
    ok = m_two >= m_scr + 0.02 and a_two >= a_scr and seconds < 1800
    record(7, ok, f"median mIoU two-stage {m_two:.3f} vs scratch {m_scr:.3f} (gap >=0.02), "
                  f"median APLS {a_two:.3f} vs {a_scr:.3f}, {seconds / 60:.1f} min")


def test_criterion_8_overfit():
    t0 = time.perf_counter()
    data = make_dataset(10, seed=3)
    cfg = TrainConfig(base_lr=5e-3, epochs=200, batch_size=4, augment=False, model=MU, seed=0)
    with single_thread():
        model, _ = train_stage(data, cfg)
    score = evaluate(model, data)["miou"]
    seconds = time.perf_counter() - t0
    record(8, score >= 0.95 and seconds < 300, f"training IoU {score:.3f} (>=0.95), {seconds:.0f}s")


def run_pipeline(root):
    assert main(["synth", "--out", str(root / "data"), "--count", "6", "--seed", "21", "--size", "32"]) == 0
    cfg = root / "cfg.json"
    small = ModelConfig(base_width=8, encoder_stages=2, blocks_per_stage=1, pp_bins=(1, 2, 4, 8))
    cfg.write_text(TrainConfig(base_lr=2e-3, epochs=3, batch_size=2, model=small, seed=4).to_json())
    manifest = str(root / "data" / "clean.tsv")
    steps = [
        ["train", "--manifest", str(root / "data" / "pseudo.tsv"), "--config", str(cfg), "--checkpoint",
         str(root / "s1.ckpt")],
        ["train", "--manifest", manifest, "--config", str(cfg), "--checkpoint", str(root / "s2.ckpt"),
         "--stage", "2", "--init", str(root / "s1.ckpt")],
        ["predict", "--checkpoint", str(root / "s2.ckpt"), "--manifest", manifest, "--out-dir", str(root / "pred")],
        ["eval-pixel", "--manifest", manifest, "--pred-dir", str(root / "pred"), "--out", str(root / "pixel.csv")],
        ["eval-apls", "--manifest", manifest, "--pred-dir", str(root / "pred"), "--spacing", "16",
         "--out", str(root / "apls.csv")],
    ]
    for argv in steps:
        assert main(["--threads", "1"] + argv) == 0
    return {name: (root / name).read_bytes() for name in ("s1.ckpt", "s2.ckpt", "pixel.csv", "apls.csv")}


def test_criterion_9_determinism(tmp_path):
    os.makedirs(tmp_path / "a")
    os.makedirs(tmp_path / "b")
    a, b = run_pipeline(tmp_path / "a"), run_pipeline(tmp_path / "b")
    same = [name for name in a if a[name] == b[name]]
    record(9, len(same) == len(a), f"byte-identical across two runs: {', '.join(same)}")
