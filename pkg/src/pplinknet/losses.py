"""Pixelwise segmentation losses with analytic gradients.

All losses take probabilities ``p`` and a binary target ``g`` of the same
shape ``(n, 1, h, w)`` (any shape works for the pixel losses) and return
``(loss, dloss_dp)``. :func:`loss_on_logits` composes them with the sigmoid
head and returns the gradient with respect to the logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn.functional import ShapeMismatch, sigmoid

__all__ = ["LossConfig", "bce", "focal", "dice", "loss_on_logits", "PROB_CLAMP"]

PROB_CLAMP = 1e-7
KINDS = ("bce", "focal", "dice", "bce_plus_dice")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "focal"
    alpha: float = 0.5
    gamma: float = 0.5
    eps: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"loss kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.eps <= 0.0:
            raise ValueError("eps must be > 0")

    def to_dict(self):
        return asdict(self)


def _check(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeMismatch(f"prediction {p.shape} and target {g.shape} differ")
    return p, g


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def bce(p, g):
    """Mean binary cross-entropy over all pixels."""
    p, g = _check(p, g)
    pc = _clamp(p)
    per_pixel = -(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))
    grad = (-(g / pc) + (1.0 - g) / (1.0 - pc)) / p.size
    return float(per_pixel.mean()), grad


def focal_per_pixel(p, g, alpha: float = 0.5, gamma: float = 0.5):
    p, g = _check(p, g)
    pc = _clamp(p)
    pt = np.where(g > 0.5, pc, 1.0 - pc)
    return -alpha * (1.0 - pt) ** gamma * np.log(pt)


def focal(p, g, alpha: float = 0.5, gamma: float = 0.5):
    """Focal loss ``-alpha (1 - p_t)^gamma log p_t``, averaged over pixels."""
    p, g = _check(p, g)
    pc = _clamp(p)
    pos = g > 0.5
    pt = np.where(pos, pc, 1.0 - pc)
    one_m = 1.0 - pt
    log_pt = np.log(pt)
    mod = one_m**gamma
    per_pixel = -alpha * mod * log_pt
    if gamma == 0.0:
        dpt = -alpha / pt
    else:
        dpt = alpha * (gamma * one_m ** (gamma - 1.0) * log_pt - mod / pt)
    grad = np.where(pos, dpt, -dpt) / p.size
    return float(per_pixel.mean()), grad


def dice(p, g, eps: float = 1.0):
    """Soft dice loss per image (leading axis), averaged over the batch."""
    p, g = _check(p, g)
    if p.ndim < 2:
        p, g = p[None], g[None]
        squeeze = True
    else:
        squeeze = False
    n = p.shape[0]
    axes = tuple(range(1, p.ndim))
    inter = (p * g).sum(axis=axes)
    num = 2.0 * inter + eps
    den = (p * p).sum(axis=axes) + (g * g).sum(axis=axes) + eps
    losses = 1.0 - num / den
    bshape = (n,) + (1,) * (p.ndim - 1)
    num_b, den_b = num.reshape(bshape), den.reshape(bshape)
    grad = -(2.0 * g * den_b - num_b * 2.0 * p) / (den_b * den_b) / n
    if squeeze:
        grad = grad[0]
    return float(losses.mean()), grad


def loss_on_logits(logits, g, cfg: LossConfig | None = None):
    """Sigmoid followed by the configured loss; gradient is w.r.t. logits.

    The probability clamp inside BCE/focal is treated as the identity when
    back-propagating to the logits, so saturated pixels keep a gradient.
    """
    cfg = cfg or LossConfig()
    z = np.asarray(logits, dtype=np.float64)
    if z.shape != np.shape(g):
        raise ShapeMismatch(f"logits {z.shape} and target {np.shape(g)} differ")
    p = sigmoid(z)
    dsig = p * (1.0 - p)
    if cfg.kind == "bce":
        loss, dp = bce(p, g)
    elif cfg.kind == "focal":
        loss, dp = focal(p, g, cfg.alpha, cfg.gamma)
    elif cfg.kind == "dice":
        loss, dp = dice(p, g, cfg.eps)
    else:
        l1, d1 = bce(p, g)
        l2, d2 = dice(p, g, cfg.eps)
        loss, dp = l1 + l2, d1 + d2
    return loss, dp * dsig
