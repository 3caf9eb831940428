"""Command-line entry point: ``pplinknet <subcommand> ...``.

Exit status is 0 on success, 1 on an internal error or a failed tolerance
check, and 2 on a usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("pplinknet")


class InputError(Exception):
    """Bad user input; reported on stderr with exit status 2."""


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def _widths(text: str | None) -> dict | None:
    """Width table from a JSON file or inline ``class=px,...``."""
    if text is None:
        return None
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            table = json.load(fh)
    else:
        table = {}
        for item in filter(None, text.split(",")):
            k, sep, v = item.partition("=")
            if not sep:
                raise InputError(f"bad width item {item!r}; expected class=px")
            table[k.strip()] = v
    try:
        return {str(k): int(v) for k, v in table.items()}
    except (TypeError, ValueError):
        raise InputError("road widths must be integers") from None


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_train_config(path: str | None):
    from .train import TrainConfig

    if path is None:
        return TrainConfig()
    try:
        return TrainConfig.from_json(_read_text(path))
    except (TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"bad training config {path}: {exc}") from None


def _pairs(manifest: str, with_graph: bool = True):
    from .manifest import load_pairs, read_manifest

    return load_pairs(read_manifest(manifest), with_graph=with_graph)


# --------------------------------------------------------------------------
# subcommands


def cmd_rasterize(args) -> int:
    from .geo import read_world_file
    from .raster import rasterize_layer, write_image
    from .vector import parse_geojson

    if not os.path.exists(args.world):
        raise InputError(f"world file not found: {args.world}")
    gt = read_world_file(args.world)
    layer = parse_geojson(_read_text(args.vectors))
    h, w = args.size
    raster = rasterize_layer(layer, gt, h, w, _widths(args.widths), args.default_width)
    write_image(args.out, raster)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import NoiseSpec, SynthConfig, write_corpus

    try:
        noise = NoiseSpec.parse(args.noise)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.count < 0:
        raise InputError("count must be >= 0")
    cfg = SynthConfig(size=args.size, road_width=args.road_width, buildings=args.buildings, noise=noise)
    paths = write_corpus(args.out, args.count, args.seed, cfg)
    print(paths["clean"])
    print(paths["pseudo"])
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .train import train_stage

    cfg = _load_train_config(args.config)
    if args.stage is not None:
        cfg = replace(cfg, stage=args.stage)
    if args.init is not None:
        cfg = replace(cfg, init_checkpoint=args.init)
    if cfg.stage == 2 and not cfg.init_checkpoint:
        raise InputError("stage 2 needs an initial checkpoint (--init)")
    dataset = _pairs(args.manifest, with_graph=False)
    eval_set = _pairs(args.eval_manifest, with_graph=False) if args.eval_manifest else None
    _, runlog = train_stage(dataset, cfg, eval_set=eval_set, checkpoint_path=args.checkpoint)
    if args.log:
        runlog.write_csv(args.log)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .graph import mask_to_graph
    from .metrics import threshold
    from .nn.checkpoint import load_checkpoint
    from .raster import write_image
    from .train import predict_proba

    model = load_checkpoint(args.checkpoint)
    pairs = _pairs(args.manifest, with_graph=False)
    os.makedirs(args.out_dir, exist_ok=True)
    for pair in pairs:
        prob = predict_proba(model, [pair.image])[0].astype(np.float32)
        mask = threshold(prob, args.threshold)
        stem = os.path.join(args.out_dir, pair.name)
        np.save(stem + ".npy", prob)
        write_image(stem + ".pgm", mask)
        if args.graphs:
            with open(stem + ".geojson", "w", encoding="utf-8") as fh:
                fh.write(mask_to_graph(mask).to_geojson())
    return EXIT_OK


def _pred_path(pred_dir: str, name: str, ext: str) -> str:
    path = os.path.join(pred_dir, name + ext)
    if not os.path.exists(path):
        raise InputError(f"missing prediction {path}")
    return path


def _write_metrics(rows, out: str | None) -> None:
    from .metrics import metrics_csv

    text = metrics_csv(rows)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_eval_pixel(args) -> int:
    from .metrics import iou
    from .raster import read_image

    rows = []
    for r in _records(args.manifest):
        gt = read_image(r.mask, with_geo=False).plane
        pred = read_image(_pred_path(args.pred_dir, r.name, ".pgm"), with_geo=False).plane
        rows.append({"image_id": r.name, "iou": iou(pred, gt)})
    _write_metrics(rows, args.out)
    return EXIT_OK


def cmd_eval_apls(args) -> int:
    from .graph import SpatialGraph, mask_to_graph
    from .metrics import apls
    from .raster import read_image

    rows = []
    for r in _records(args.manifest):
        if not r.graph:
            raise InputError(f"manifest row for {r.name} has no ground-truth graph")
        gt = SpatialGraph.from_geojson(_read_text(r.graph))
        gpath = os.path.join(args.pred_dir, r.name + ".geojson")
        if os.path.exists(gpath):
            prop = SpatialGraph.from_geojson(_read_text(gpath))
        else:
            prop = mask_to_graph(read_image(_pred_path(args.pred_dir, r.name, ".pgm"), with_geo=False).plane)
        rep = apls(gt, prop, spacing=args.spacing, buffer=args.buffer)
        rows.append({"image_id": r.name, "apls": rep.score})
    _write_metrics(rows, args.out)
    return EXIT_OK


def cmd_eval_buildings(args) -> int:
    from scipy import ndimage

    from .geo import read_world_file
    from .metrics import building_f1
    from .raster import _to_pixel_xy, binarize, read_image
    from .vector import parse_geojson

    rows = []
    for r in _records(args.manifest):
        pred = read_image(_pred_path(args.pred_dir, r.name, ".pgm"), with_geo=False).plane
        if args.vectors_dir:
            if not r.world:
                raise InputError(f"manifest row for {r.name} needs a world file to place vectors")
            gt = read_world_file(r.world)
            layer = parse_geojson(_read_text(os.path.join(args.vectors_dir, r.name + ".geojson")))
            instances = [_to_pixel_xy(gt, b.ring) for b in layer.buildings]
        else:
            gt_mask = binarize(read_image(r.mask, with_geo=False).plane)
            instances, _ = ndimage.label(gt_mask, structure=np.ones((3, 3), dtype=int))
        s = building_f1(pred, instances, args.iou_thresh)
        rows.append({"image_id": r.name, "precision": s.precision, "recall": s.recall, "f1": s.f1})
    _write_metrics(rows, args.out)
    return EXIT_OK


def _records(manifest: str):
    from .manifest import read_manifest

    return read_manifest(manifest)


def cmd_grad_check(args) -> int:
    from .nn.gradcheck import check_layers, check_losses, check_model

    results = check_layers(args.seed, args.tol) + check_losses(args.seed, args.tol)
    results.append(check_model(args.seed, args.model_tol))
    width = max(len(r.name) for r in results)
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  {r.max_rel_error:.3e}  < {r.tolerance:.0e}  {status}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_INTERNAL


def cmd_lr_dump(args) -> int:
    from .train import poly_lr

    if args.max_iter < 1:
        raise InputError("--max-iter must be >= 1")
    print("iter,lr")
    for it in range(args.max_iter + 1):
        print(f"{it},{poly_lr(args.base, it, args.max_iter, args.power)!r}")
    return EXIT_OK


def cmd_fractions(args) -> int:
    from dataclasses import replace

    from .nn.checkpoint import load_checkpoint
    from .train import fraction_protocol, fraction_table_csv

    cfg = _load_train_config(args.config)
    try:
        fractions = tuple(float(f) for f in args.fractions.split(","))
    except ValueError:
        raise InputError(f"bad fraction list {args.fractions!r}") from None
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise InputError("fractions must lie in (0, 1]")
    pretrained = load_checkpoint(args.pretrained) if args.pretrained else None
    pseudo = _pairs(args.pseudo, with_graph=False) if args.pseudo else None
    if pretrained is None and pseudo is None:
        raise InputError("give --pretrained or --pseudo")
    stage1 = _load_train_config(args.stage1_config) if args.stage1_config else replace(cfg, stage=1)
    rows = fraction_protocol(_pairs(args.clean, with_graph=False), _pairs(args.heldout), cfg,
                             pretrained=pretrained, pseudo=pseudo, stage1=stage1, fractions=fractions,
                             apls_kwargs={"spacing": args.spacing, "buffer": args.buffer})
    text = fraction_table_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pplinknet", description="Road segmentation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS threads (1 gives byte-reproducible results; 0 leaves the default)")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("rasterize", help="render vector GeoJSON into a binary mask")
    s.add_argument("--vectors", required=True, help="GeoJSON FeatureCollection")
    s.add_argument("--world", required=True, help="world file with the tile geotransform")
    s.add_argument("--size", required=True, type=_size, help="tile size as HxW")
    s.add_argument("--widths", help="JSON file or class=px,... road width table")
    s.add_argument("--default-width", type=int, help="width for classes missing from the table")
    s.add_argument("--out", required=True, help="output PGM (a .wld sidecar is written next to it)")
    s.set_defaults(func=cmd_rasterize)

    s = sub.add_parser("synth", help="generate a seeded synthetic tile corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", default="width=2,dropout=0.1,offset=1.5",
                   help='pseudo-label noise, e.g. "width=2,dropout=0.1,offset=1.5,pixel=10" or "none"')
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--road-width", type=int, default=5)
    s.add_argument("--buildings", type=float, default=0.0, help="expected buildings per 64x64 area")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one stage and write a checkpoint")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", help="TrainConfig JSON (defaults when omitted)")
    s.add_argument("--checkpoint", required=True, help="output checkpoint path")
    s.add_argument("--log", help="per-epoch CSV log path")
    s.add_argument("--stage", type=int, choices=(1, 2))
    s.add_argument("--init", help="checkpoint to start from (required for stage 2)")
    s.add_argument("--eval-manifest", help="held-out set for best-epoch selection")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="write probabilities and thresholded masks")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--graphs", action="store_true", help="also write extracted road graphs")
    s.set_defaults(func=cmd_predict)

    for name, func, help_ in (("eval-pixel", cmd_eval_pixel, "per-image IoU and mIoU"),
                              ("eval-apls", cmd_eval_apls, "per-image APLS"),
                              ("eval-buildings", cmd_eval_buildings, "building instance F1")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--manifest", required=True, help="ground-truth manifest")
        s.add_argument("--pred-dir", required=True, help="directory of <name>.pgm predictions")
        s.add_argument("--out", help="metrics CSV path (stdout when omitted)")
        if name == "eval-apls":
            s.add_argument("--spacing", type=float, default=50.0)
            s.add_argument("--buffer", type=float, default=4.0)
        if name == "eval-buildings":
            s.add_argument("--iou-thresh", type=float, default=0.5)
            s.add_argument("--vectors-dir", help="per-tile GeoJSON with building polygons")
        s.set_defaults(func=func)

    s = sub.add_parser("grad-check", help="finite-difference check of every gradient")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--model-tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("lr-dump", help="print the poly learning-rate table")
    s.add_argument("--base", type=float, default=2e-4)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--power", type=float, default=0.9)
    s.set_defaults(func=cmd_lr_dump)

    s = sub.add_parser("fractions", help="scratch vs two-stage over clean-data fractions")
    s.add_argument("--clean", required=True, help="clean training pool manifest")
    s.add_argument("--heldout", required=True, help="held-out manifest (with graphs)")
    s.add_argument("--config", help="TrainConfig JSON for the fine-tune and scratch runs")
    s.add_argument("--pretrained", help="stage-1 checkpoint")
    s.add_argument("--pseudo", help="pseudo-label manifest for stage 1 (when no --pretrained)")
    s.add_argument("--stage1-config", help="TrainConfig JSON for stage 1")
    s.add_argument("--fractions", default="0.01,0.05,0.1,0.25,0.5,1.0")
    s.add_argument("--spacing", type=float, default=50.0)
    s.add_argument("--buffer", type=float, default=4.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_fractions)
    return p


def main(argv=None) -> int:
    from .geo import MalformedWorldFile, SingularTransform
    from .manifest import ManifestError
    from .nn.checkpoint import CheckpointError
    from .nn.model import ConfigError
    from .raster import CorruptHeader, DegeneratePolygon, UnsupportedFormat
    from threadpoolctl import threadpool_limits
    from .vector import GeometryError, ParseError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    input_errors = (InputError, ManifestError, ParseError, GeometryError, MalformedWorldFile,
                    SingularTransform, CorruptHeader, UnsupportedFormat, DegeneratePolygon,
                    CheckpointError, ConfigError, FileNotFoundError)
    try:
        if args.threads > 0:
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except input_errors as exc:
        print(f"pplinknet {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"pplinknet {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
