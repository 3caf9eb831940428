"""Finite-difference certification of every analytic gradient.

All checks run in float64 with central differences. The objective for a
layer is ``sum(out * R)`` for a fixed random ``R``, so every output element
contributes to the checked gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from .layers import PyramidPooling, ReLU
from .model import ModelConfig, build_model

__all__ = ["GradResult", "numeric_grad", "rel_error", "check_layers", "check_losses",
           "check_model", "run_suite"]

STEP = 1e-5


@dataclass
class GradResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < self.tolerance


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = STEP, indices=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    if indices is None:
        indices = list(np.ndindex(*x.shape))
    for idx in indices:
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(analytic, numeric, indices=None) -> float:
    """Max absolute discrepancy relative to the gradient tensor's magnitude.

    ``max|a - n| / max(max|a|, max|n|)``: finite differences carry an
    absolute round-off floor, so near-zero entries are judged against the
    tensor scale rather than their own size. With ``indices`` only those
    entries of ``numeric`` are compared, but the scale uses all of
    ``analytic``.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.abs(a).max(initial=0.0)
    if indices is not None:
        a = np.array([a[i] for i in indices])
        n = np.array([n[i] for i in indices])
    scale = max(scale, np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def _check_op(name, forward, backward, inputs, rng, tol):
    """``forward(*inputs) -> (out, cache)``; ``backward(dout, cache) -> grads``."""
    out, _ = forward(*inputs)
    r = rng.standard_normal(out.shape)

    def objective():
        return float((forward(*inputs)[0] * r).sum())

    _, cache = forward(*inputs)
    grads = backward(r, cache)
    worst = 0.0
    for x, g in zip(inputs, grads):
        if g is None:
            continue
        worst = max(worst, rel_error(g, numeric_grad(objective, x)))
    return GradResult(name, worst, tol)


def check_layers(seed: int = 0, tol: float = 1e-6) -> list[GradResult]:
    rng = np.random.default_rng(seed)
    randn = rng.standard_normal
    out = []

    x = randn((2, 3, 6, 6))
    w = randn((4, 3, 3, 3))
    b = randn(4)
    out.append(_check_op(
        "conv2d stride1 pad1",
        lambda x, w, b: F.conv2d(x, w, b, 1, 1),
        lambda d, c: F.conv2d_backward(d, c), [x, w, b], rng, tol))
    x = randn((2, 2, 7, 7))
    w = randn((3, 2, 3, 3))
    out.append(_check_op(
        "conv2d stride2 pad1",
        lambda x, w: F.conv2d(x, w, None, 2, 1),
        lambda d, c: F.conv2d_backward(d, c)[:2], [x, w], rng, tol))

    x = randn((2, 3, 4, 4))
    w = randn((3, 2, 4, 4))
    b = randn(2)
    out.append(_check_op(
        "conv_transpose2d k4 s2 p1",
        lambda x, w, b: F.conv_transpose2d(x, w, b, 2, 1),
        F.conv_transpose2d_backward, [x, w, b], rng, tol))

    x = randn((3, 4, 5, 5)) * 2.0 + 0.5
    gamma = randn(4)
    beta = randn(4)
    for train in (True, False):
        rm, rv = randn(4), rng.uniform(0.5, 2.0, 4)
        out.append(_check_op(
            f"batch_norm {'train' if train else 'eval'}",
            lambda x, g, bt, train=train, rm=rm, rv=rv: F.batch_norm(x, g, bt, rm.copy(), rv.copy(), train),
            F.batch_norm_backward, [x, gamma, beta], rng, tol))

    # keep values away from the kink so central differences are valid
    x = randn((2, 3, 5, 5))
    x[np.abs(x) < 1e-2] += 0.1
    out.append(_check_op("relu", F.relu, lambda d, m: (F.relu_backward(d, m),), [x], rng, tol))

    x = rng.permutation(2 * 2 * 6 * 6).reshape(2, 2, 6, 6) / 10.0
    out.append(_check_op("max_pool2d", lambda x: F.max_pool2d(x, 2),
                         lambda d, c: (F.max_pool2d_backward(d, c),), [x], rng, tol))

    for bins in (1, 2, 3, 6):
        x = randn((2, 3, 6, 6))
        out.append(_check_op(f"adaptive_avg_pool2d bins={bins}",
                             lambda x, bins=bins: F.adaptive_avg_pool2d(x, bins),
                             lambda d, c: (F.adaptive_avg_pool2d_backward(d, c),), [x], rng, tol))

    x = randn((2, 2, 3, 2))
    out.append(_check_op("bilinear_upsample", lambda x: F.bilinear_upsample(x, 7, 5),
                         lambda d, c: (F.bilinear_upsample_backward(d, c),), [x], rng, tol))

    out.append(check_pyramid_pooling(seed, tol))
    return out


def check_pyramid_pooling(seed: int = 0, tol: float = 1e-6, shape=(1, 8, 12, 12)) -> GradResult:
    rng = np.random.default_rng(seed + 17)
    ppm = PyramidPooling(shape[1], (1, 2, 3, 6), rng)
    ppm.astype(np.float64)
    x = rng.standard_normal(shape)
    r = rng.standard_normal(shape)

    def objective():
        return float((ppm.forward(x, True) * r).sum())

    ppm.zero_grad()
    ppm.forward(x, True)
    dx = ppm.backward(r)
    worst = rel_error(dx, numeric_grad(objective, x))
    for _, p in ppm.named_parameters():
        idx = _sample_indices(p.value.shape, rng, 6)
        worst = max(worst, rel_error(p.grad, numeric_grad(objective, p.value, indices=idx), idx))
    return GradResult("pyramid_pooling_module", worst, tol)


def check_losses(seed: int = 0, tol: float = 1e-6) -> list[GradResult]:
    from ..losses import LossConfig, loss_on_logits

    rng = np.random.default_rng(seed + 1)
    z = rng.standard_normal((2, 1, 6, 6)) * 2.0
    g = (rng.uniform(size=z.shape) < 0.4).astype(np.float64)
    results = []
    for kind in ("bce", "focal", "dice", "bce_plus_dice"):
        cfg = LossConfig(kind=kind)
        _, grad = loss_on_logits(z, g, cfg)
        num = numeric_grad(lambda: loss_on_logits(z, g, cfg)[0], z)
        results.append(GradResult(f"loss {kind}", rel_error(grad, num), tol))
    return results


def _sample_indices(shape, rng, k):
    total = int(np.prod(shape))
    flat = rng.choice(total, size=min(k, total), replace=False)
    return [np.unravel_index(i, shape) for i in sorted(flat)]


def _relu_signature(model) -> bytes:
    return b"".join(np.packbits(layer._mask).tobytes()
                    for layer in model.modules() if isinstance(layer, ReLU))


def check_model(seed: int = 0, tol: float = 1e-4, per_tensor: int = 2,
                cfg: ModelConfig | None = None, size: int = 24,
                dtype=np.float64) -> GradResult:
    """End-to-end check of the full model under the focal loss.

    Every parameter tensor and the input are probed at ``per_tensor``
    sampled coordinates. A probe whose +-h perturbation flips any ReLU is
    straddling a kink, where central differences are meaningless; it is
    replaced by another coordinate. With ``dtype=float32`` the analytic
    gradient comes from the float32 model while the finite differences are
    still taken in float64 on the same weights.
    """
    from ..losses import LossConfig, loss_on_logits

    cfg = cfg or ModelConfig(base_width=8, encoder_stages=2, blocks_per_stage=2, pp_bins=(1, 2, 3))
    rng = np.random.default_rng(seed + 2)
    model = build_model(cfg, seed)
    x = rng.standard_normal((1, cfg.in_channels, size, size))
    g = (rng.uniform(size=(1, 1, size, size)) < 0.3).astype(np.float64)
    loss_cfg = LossConfig(kind="focal")

    model.astype(dtype)
    model.zero_grad()
    _, dlogits = loss_on_logits(model.forward(x.astype(dtype), True), g, loss_cfg)
    dx = model.backward(dlogits.astype(dtype))
    analytic = {name: p.grad.astype(np.float64) for name, p in model.named_parameters()}
    model.astype(np.float64)

    def objective():
        return loss_on_logits(model.forward(x, True), g, loss_cfg)[0]

    objective()
    base_sig = _relu_signature(model)

    def probe(arr, want):
        picked, values = [], []
        for flat in rng.permutation(arr.size):
            idx = np.unravel_index(flat, arr.shape)
            old = arr[idx]
            arr[idx] = old + STEP
            fp = objective()
            sig_p = _relu_signature(model)
            arr[idx] = old - STEP
            fm = objective()
            sig_m = _relu_signature(model)
            arr[idx] = old
            if sig_p != base_sig or sig_m != base_sig:
                continue
            picked.append(idx)
            values.append((fp - fm) / (2.0 * STEP))
            if len(picked) == want:
                break
        num = np.zeros_like(arr)
        for idx, v in zip(picked, values):
            num[idx] = v
        return picked, num

    idx, num = probe(x, per_tensor * 4)
    worst = rel_error(dx, num, idx)
    for name, p in model.named_parameters():
        idx, num = probe(p.value, per_tensor)
        worst = max(worst, rel_error(analytic[name], num, idx))
    label = "pp-linknet-mu end to end" + ("" if dtype == np.float64 else f" ({np.dtype(dtype).name})")
    return GradResult(label, worst, tol)


def run_suite(seed: int = 0) -> list[GradResult]:
    return (check_layers(seed) + check_losses(seed)
            + [check_model(seed), check_model(seed, tol=1e-2, dtype=np.float32)])
