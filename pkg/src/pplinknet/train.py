"""Optimisation: Adam, learning-rate schedules and two-stage training.

Stage 1 trains on a large corpus of noisy pseudo masks; stage 2 loads every
stage-1 weight (nothing frozen) and fine-tunes on a small clean corpus with
a freshly restarted schedule.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .losses import LossConfig, loss_on_logits
from .nn import Model, ModelConfig, build_model
from .nn.checkpoint import CheckpointMismatch, load_into, save_checkpoint
from .nn.functional import ShapeMismatch

__all__ = [
    "DomainError",
    "EmptyDataset",
    "poly_lr",
    "PlateauSchedule",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "RunLog",
    "EpochRecord",
    "images_to_tensor",
    "masks_to_tensor",
    "predict_proba",
    "evaluate",
    "train_stage",
    "train_two_stage",
    "fraction_protocol",
    "single_thread",
]

log = logging.getLogger(__name__)


class DomainError(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


# --------------------------------------------------------------------------
# schedules


def poly_lr(base_lr: float, it: int, max_iter: int, power: float = 0.9) -> float:
    """``base_lr * (1 - it / max_iter) ** power``."""
    if max_iter <= 0:
        raise DomainError("max_iter must be positive")
    if it < 0 or it > max_iter:
        raise DomainError(f"iteration {it} outside [0, {max_iter}]")
    return base_lr * (1.0 - it / max_iter) ** power


class PlateauSchedule:
    """Divide the LR by ``1/factor`` when the epoch loss stops improving.

    Improvement means dropping below ``best * (1 - threshold)``. After
    ``patience`` epochs without improvement the LR is reduced, at most
    ``max_reductions`` times.
    """

    def __init__(self, base_lr, factor=0.2, patience=3, max_reductions=3, threshold=1e-4):
        self.lr = base_lr
        self.factor, self.patience = factor, patience
        self.max_reductions, self.threshold = max_reductions, threshold
        self.best = math.inf
        self.bad_epochs = 0
        self.reductions = 0

    def step(self, loss: float) -> float:
        if loss < self.best * (1.0 - self.threshold):
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience and self.reductions < self.max_reductions:
                self.lr *= self.factor
                self.reductions += 1
                self.bad_epochs = 0
        return self.lr


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update of ``params`` in place.

    ``params`` and ``grads`` map names to arrays of matching shape; moment
    buffers are created lazily as zeros.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} != parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


# --------------------------------------------------------------------------
# config and logs


@dataclass
class TrainConfig:
    base_lr: float = 2e-4
    batch_size: int = 4
    epochs: int = 90
    schedule: str = "poly"
    power: float = 0.9
    plateau_factor: float = 0.2
    plateau_patience: int = 3
    plateau_max_reductions: int = 3
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    stage: int = 1
    init_checkpoint: str | None = None
    augment: bool = True
    eval_every: int = 0
    threshold: float = 0.5
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.base_lr < 0:
            raise ValueError("base_lr must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.schedule not in ("poly", "plateau"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        d["model"] = self.model.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    miou: float | None
    seconds: float


@dataclass
class RunLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_miou: float | None = None

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "loss", "lr", "miou", "seconds"])
        for r in self.records:
            miou = "" if r.miou is None else f"{r.miou:.10g}"
            w.writerow([r.epoch, f"{r.loss:.10g}", f"{r.lr:.10g}", miou, f"{r.seconds:.3f}"])
        return out.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


@contextlib.contextmanager
def single_thread():
    """Limit BLAS/OpenMP pools to one thread (the reproducibility mode)."""
    with threadpool_limits(limits=1):
        yield


# --------------------------------------------------------------------------
# data


def images_to_tensor(images: Sequence[np.ndarray], dtype=np.float32) -> np.ndarray:
    """Stack ``H x W x 3`` uint8 tiles into an NCHW tensor scaled to [-1, 1]."""
    arr = np.stack([np.asarray(im) for im in images]).astype(dtype)
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2) / 127.5 - 1.0, dtype=dtype)


def masks_to_tensor(masks: Sequence[np.ndarray], dtype=np.float32) -> np.ndarray:
    arr = np.stack([np.asarray(m) for m in masks])
    if arr.ndim == 4:
        arr = arr[..., 0]
    fg = arr if arr.dtype == bool else arr > 127
    return fg.astype(dtype)[:, None]


def _augment(img: np.ndarray, mask: np.ndarray, rng: np.random.Generator):
    """Random flips and 90-degree rotations applied identically to both."""
    if rng.random() < 0.5:
        img, mask = img[:, ::-1], mask[:, ::-1]
    if rng.random() < 0.5:
        img, mask = img[::-1], mask[::-1]
    k = int(rng.integers(4))
    if img.shape[0] != img.shape[1]:
        k = 2 * (k % 2)
    if k:
        img, mask = np.rot90(img, k), np.rot90(mask, k)
    return img, mask


def predict_proba(model: Model, images: Sequence[np.ndarray], batch_size: int = 8) -> np.ndarray:
    """Eval-mode probabilities, shape ``(n, h, w)``."""
    out = []
    for i in range(0, len(images), batch_size):
        x = images_to_tensor(images[i : i + batch_size])
        out.append(model.predict_proba(x)[:, 0])
    return np.concatenate(out) if out else np.zeros((0, 0, 0), np.float32)


def evaluate(model: Model, dataset, threshold: float = 0.5, with_apls: bool = False,
             apls_kwargs: dict | None = None) -> dict:
    """Held-out mIoU (and optionally mean APLS) of thresholded predictions."""
    from .graph import mask_to_graph
    from .metrics import apls, iou

    probs = predict_proba(model, [s.image for s in dataset])
    preds = probs > threshold
    ious = [iou(p, s.mask) for p, s in zip(preds, dataset)]
    result = {"miou": float(np.mean(ious)), "ious": ious}
    if with_apls:
        kw = dict(apls_kwargs or {})
        scores = []
        for p, s in zip(preds, dataset):
            if s.graph is None:
                raise ValueError(f"sample {s.name!r} has no ground-truth graph for APLS")
            scores.append(apls(s.graph, mask_to_graph(p), **kw).score)
        result["apls"] = float(np.mean(scores))
        result["apls_scores"] = scores
    return result


# --------------------------------------------------------------------------
# training


def train_stage(dataset, cfg: TrainConfig, model: Model | None = None, eval_set=None,
                checkpoint_path: str | os.PathLike | None = None) -> tuple[Model, RunLog]:
    """Train ``model`` (built from ``cfg.model`` when omitted) on ``dataset``.

    Runs ``epochs * ceil(N / batch_size)`` iterations with seeded shuffling
    and augmentation. When ``eval_set`` is given and ``cfg.eval_every > 0``
    the best-mIoU weights are kept and returned (and written to
    ``checkpoint_path``); otherwise the final weights are.
    """
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("training dataset is empty")
    if model is None:
        model = build_model(cfg.model, seed=cfg.seed)
    if cfg.init_checkpoint:
        load_into(model, cfg.init_checkpoint)
    h, w = dataset[0].mask.shape
    model.cfg.check_input(h, w)

    rng = np.random.default_rng([cfg.seed, cfg.stage, 7919])
    n = len(dataset)
    per_epoch = math.ceil(n / cfg.batch_size)
    max_iter = cfg.epochs * per_epoch
    adam = AdamState()
    plateau = PlateauSchedule(cfg.base_lr, cfg.plateau_factor, cfg.plateau_patience,
                              cfg.plateau_max_reductions)
    lr = cfg.base_lr
    runlog = RunLog()
    best_state = None
    it = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for b in range(per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            imgs, masks = [], []
            for i in idx:
                im, mk = dataset[i].image, dataset[i].mask
                if cfg.augment:
                    im, mk = _augment(im, mk, rng)
                imgs.append(im)
                masks.append(mk)
            x = images_to_tensor(imgs)
            y = masks_to_tensor(masks, np.float64)
            if cfg.schedule == "poly":
                lr = poly_lr(cfg.base_lr, it, max_iter, cfg.power)
            model.zero_grad()
            logits = model.forward(x, train=True)
            loss, dlogits = loss_on_logits(logits, y, cfg.loss)
            model.backward(dlogits.astype(x.dtype))
            adam_step(model.parameters(), model.gradients(), adam, lr)
            total += loss * len(idx)
            seen += len(idx)
            it += 1
        epoch_loss = total / seen
        lr_used = lr
        if cfg.schedule == "plateau":
            lr = plateau.step(epoch_loss)
        miou = None
        if eval_set is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            miou = evaluate(model, eval_set, cfg.threshold)["miou"]
            if runlog.best_miou is None or miou > runlog.best_miou:
                runlog.best_miou, runlog.best_epoch = miou, epoch + 1
                best_state = model.copy_state()
        runlog.records.append(EpochRecord(epoch + 1, epoch_loss, lr_used, miou, time.perf_counter() - t0))
        log.info("stage %d epoch %d loss %.5f lr %.3g miou %s", cfg.stage, epoch + 1,
                 epoch_loss, lr_used, "-" if miou is None else f"{miou:.4f}")
    if best_state is not None:
        model.load_state_dict(best_state)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return model, runlog


def train_two_stage(pseudo, clean, stage1: TrainConfig, stage2: TrainConfig | None = None,
                    eval_set=None) -> tuple[Model, RunLog, RunLog]:
    """Pre-train on noisy pseudo masks, then fine-tune all weights on clean ones."""
    stage2 = stage2 or replace(stage1, stage=2)
    if stage2.model != stage1.model:
        raise CheckpointMismatch("stage-2 model config differs from stage 1")
    model, log1 = train_stage(pseudo, replace(stage1, stage=1), eval_set=eval_set)
    model, log2 = train_stage(clean, replace(stage2, stage=2, init_checkpoint=None), model=model,
                              eval_set=eval_set)
    return model, log1, log2


def _subsample(dataset, fraction: float, seed: int):
    n = max(1, int(round(fraction * len(dataset))))
    rng = np.random.default_rng([seed, 104729])
    idx = np.sort(rng.permutation(len(dataset))[:n])
    return [dataset[i] for i in idx]


def fraction_protocol(clean, heldout, cfg: TrainConfig, pretrained: Model | None = None,
                      pseudo=None, stage1: TrainConfig | None = None,
                      fractions=(0.01, 0.05, 0.10, 0.25, 0.5, 1.0), apls_kwargs=None) -> list[dict]:
    """Scratch vs two-stage training on growing fractions of the clean pool.

    The stage-1 model is either passed in (``pretrained``) or trained once on
    ``pseudo`` with ``stage1``. Each row reports held-out mIoU and APLS.
    """
    if pretrained is None:
        if pseudo is None:
            raise ValueError("need either a pretrained model or a pseudo corpus")
        pretrained, _ = train_stage(pseudo, replace(stage1 or cfg, stage=1))
    base_state = pretrained.copy_state()
    rows = []
    for frac in fractions:
        subset = _subsample(clean, frac, cfg.seed)
        scratch, _ = train_stage(subset, replace(cfg, stage=1, init_checkpoint=None))
        tuned = build_model(pretrained.cfg)
        tuned.load_state_dict(base_state)
        tuned, _ = train_stage(subset, replace(cfg, stage=2, init_checkpoint=None), model=tuned)
        for name, m in (("scratch", scratch), ("two_stage", tuned)):
            res = evaluate(m, heldout, cfg.threshold, with_apls=True, apls_kwargs=apls_kwargs)
            rows.append({"fraction": frac, "n_train": len(subset), "variant": name,
                         "miou": res["miou"], "apls": res["apls"]})
    return rows


def fraction_table_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["fraction", "n_train", "variant", "miou", "apls"])
    for r in rows:
        w.writerow([f"{r['fraction']:g}", r["n_train"], r["variant"], f"{r['miou']:.10g}", f"{r['apls']:.10g}"])
    return out.getvalue()
