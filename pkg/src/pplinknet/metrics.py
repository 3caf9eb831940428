"""Pixel IoU, the APLS road-topology score and building instance F1."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .graph import SpatialGraph, inject_control_nodes, path_lengths, snap_node
from .nn.functional import ShapeMismatch
from .raster import binarize, fill_polygon

__all__ = [
    "ConfusionCounts",
    "AplsReport",
    "BuildingScore",
    "EmptyInput",
    "confusion",
    "iou",
    "mean_iou",
    "threshold",
    "apls",
    "building_f1",
    "metrics_csv",
]

log = logging.getLogger(__name__)


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def iou(self) -> float:
        denom = self.tp + self.fp + self.fn
        return 1.0 if denom == 0 else self.tp / denom


def _pair(pred, gt):
    p, g = binarize(pred), binarize(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"prediction {p.shape} and ground truth {g.shape} differ")
    return p, g


def confusion(pred, gt) -> ConfusionCounts:
    p, g = _pair(pred, gt)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def iou(pred, gt) -> float:
    """Foreground IoU; two empty masks score 1."""
    return confusion(pred, gt).iou


def mean_iou(pairs) -> float:
    scores = [iou(p, g) for p, g in pairs]
    if not scores:
        raise EmptyInput("mean_iou needs at least one pair")
    return float(np.mean(scores))


def threshold(probabilities, t: float = 0.5) -> np.ndarray:
    """Strict ``p > t`` as a ``{0, 255}`` uint8 mask."""
    return np.where(np.asarray(probabilities) > t, 255, 0).astype(np.uint8)


# --------------------------------------------------------------------------
# APLS


@dataclass(frozen=True)
class AplsReport:
    score: float
    gt_to_prop: float
    prop_to_gt: float
    n_gt_to_prop: int
    n_prop_to_gt: int


_ROUNDING = 1e-12


def _direction(src: SpatialGraph, tgt: SpatialGraph, spacing: float, buffer: float):
    """One-sided score ``1 - mean(term)`` and the number of scored pairs."""
    src_c = inject_control_nodes(src, spacing)
    tgt_c = tgt.copy()
    ids = sorted(src_c.nodes)
    snapped = {a: snap_node(tgt_c, src_c.nodes[a], buffer) for a in ids}
    d_src = path_lengths(src_c, ids)
    targets = sorted({s for s in snapped.values() if s is not None})
    d_tgt = path_lengths(tgt_c, targets)
    total, n = 0.0, 0
    for i, a in enumerate(ids):
        row = d_src[a]
        for b in ids[i + 1 :]:
            length = row.get(b)
            if length is None or length <= 0.0:
                continue
            n += 1
            a2, b2 = snapped[a], snapped[b]
            found = None if a2 is None or b2 is None else d_tgt[a2].get(b2)
            if found is None:
                total += 1.0
            else:
                diff = abs(length - found)
                # the same path measured along differently split polylines
                if diff <= _ROUNDING * length:
                    diff = 0.0
                total += min(1.0, diff / length)
    if n == 0:
        return 0.0, 0
    return 1.0 - total / n, n


def apls(gt: SpatialGraph, prop: SpatialGraph, spacing: float = 50.0, buffer: float = 4.0) -> AplsReport:
    """Average path length similarity, averaged over both directions.

    Control nodes are injected into the source graph of each direction and
    snapped within ``buffer`` into a copy of the other graph. Pairs are
    unordered and count only when the source graph connects them. A
    direction with no such pair scores 0 (with a warning) unless both graphs
    have none, in which case the result is 1.
    """
    s1, n1 = _direction(gt, prop, spacing, buffer)
    s2, n2 = _direction(prop, gt, spacing, buffer)
    if n1 == 0 and n2 == 0:
        return AplsReport(1.0, 1.0, 1.0, 0, 0)
    for n, label in ((n1, "ground truth"), (n2, "proposal")):
        if n == 0:
            log.warning("APLS: %s graph has no paths; that direction scores 0", label)
    score = 0.5 * (s1 + s2)
    return AplsReport(float(min(1.0, max(0.0, score))), s1, s2, n1, n2)


# --------------------------------------------------------------------------
# buildings


@dataclass(frozen=True)
class BuildingScore:
    precision: float
    recall: float
    f1: float
    matches: int
    n_pred: int
    n_gt: int


def _gt_labels(gt_instances, shape) -> tuple[np.ndarray, int]:
    if isinstance(gt_instances, np.ndarray) and gt_instances.ndim == 2:
        if gt_instances.shape != tuple(shape):
            raise ShapeMismatch("labeled ground truth shape differs from prediction")
        values = np.unique(gt_instances)
        values = values[values != 0]
        labels = np.zeros(shape, dtype=np.int64)
        for k, v in enumerate(values, start=1):
            labels[gt_instances == v] = k
        return labels, len(values)
    rings = list(gt_instances)
    masks = []
    for ring in rings:
        m = np.zeros(shape, dtype=np.uint8)
        fill_polygon(m, ring)
        masks.append(m > 0)
    return masks, len(masks)


def _instance_ious(pred_labels, n_pred, gt, n_gt) -> np.ndarray:
    """``(n_pred, n_gt)`` IoU matrix."""
    out = np.zeros((n_pred, n_gt))
    if n_pred == 0 or n_gt == 0:
        return out
    pred_area = np.bincount(pred_labels.ravel(), minlength=n_pred + 1)
    if isinstance(gt, np.ndarray):
        gt_area = np.bincount(gt.ravel(), minlength=n_gt + 1)
        both = (pred_labels > 0) & (gt > 0)
        inter = np.zeros((n_pred + 1, n_gt + 1))
        np.add.at(inter, (pred_labels[both], gt[both]), 1)
        inter = inter[1:, 1:]
        union = pred_area[1:, None] + gt_area[None, 1:] - inter
    else:
        inter = np.zeros((n_pred, n_gt))
        union = np.zeros((n_pred, n_gt))
        for j, m in enumerate(gt):
            counts = np.bincount(pred_labels[m], minlength=n_pred + 1)[1:]
            inter[:, j] = counts
            union[:, j] = pred_area[1:] + m.sum() - counts
    np.divide(inter, union, out=out, where=union > 0)
    return out


def building_f1(pred_mask, gt_instances, iou_thresh: float = 0.5) -> BuildingScore:
    """Instance F1 with greedy one-to-one matching by descending IoU.

    Predicted instances are the 8-connected components of ``pred_mask``.
    ``gt_instances`` is either a list of pixel-space polygon rings, each
    rasterised on its own, or a 2-D integer label image (0 = background).
    """
    pred = binarize(pred_mask)
    pred_labels, n_pred = ndimage.label(pred, structure=np.ones((3, 3), dtype=int))
    gt, n_gt = _gt_labels(gt_instances, pred.shape)
    ious = _instance_ious(pred_labels, n_pred, gt, n_gt)
    cand = np.argwhere(ious >= iou_thresh)
    # stable sort: ties resolved by (pred, gt) index order
    order = np.argsort(-ious[cand[:, 0], cand[:, 1]], kind="stable") if len(cand) else []
    used_p, used_g, matches = set(), set(), 0
    for k in order:
        i, j = cand[k]
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches += 1
    precision = matches / n_pred if n_pred else 0.0
    recall = matches / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return BuildingScore(precision, recall, f1, matches, n_pred, n_gt)


# --------------------------------------------------------------------------
# CSV


_COLUMNS = ("image_id", "iou", "apls", "precision", "recall", "f1")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def metrics_csv(rows: list[dict]) -> str:
    """Per-image rows plus a ``summary`` row holding the column means.

    Missing values are left blank and excluded from the means.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in _COLUMNS])
    summary = ["summary"]
    for c in _COLUMNS[1:]:
        vals = [r[c] for r in rows if r.get(c) is not None]
        summary.append(_fmt(float(np.mean(vals))) if vals else "")
    writer.writerow(summary)
    return buf.getvalue()
