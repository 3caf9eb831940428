"""PP-LinkNet-mu: residual encoder, pyramid-pooling centre, bottleneck decoder.

Layout for ``S`` encoder stages and base width ``C0`` (``C_s = C0 * 2**s``)::

    stem     3x3 conv-BN-ReLU, in_channels -> C0, full resolution      e_0
    stage s  stride-2 BasicBlock C_{s-1} -> C_s, then identity blocks   e_s
    centre   PyramidPooling on e_S
    decoder  for s = S..1:  d = DecoderBlock(C_s -> C_{s-1})(d) + e_{s-1}
    head     3x3 conv C0 -> 1 (with bias), logits at input resolution
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from math import lcm

import numpy as np

from . import functional as F
from .layers import BasicBlock, Conv2d, DecoderBlock, Layer, PyramidPooling, Sequential, conv_bn_relu

__all__ = ["ModelConfig", "ConfigError", "Model", "build_model", "parameter_count"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    base_width: int = 8
    encoder_stages: int = 3
    blocks_per_stage: int = 2
    pp_bins: tuple[int, ...] = (1, 2, 3, 6)
    input_size: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "pp_bins", tuple(int(b) for b in self.pp_bins))
        if self.input_size is not None:
            object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        self.validate()

    def validate(self) -> None:
        ints = (self.in_channels, self.base_width, self.encoder_stages, self.blocks_per_stage)
        if min(ints) < 1 or not self.pp_bins or min(self.pp_bins) < 1:
            raise ConfigError(f"all model config values must be positive: {self}")
        if self.base_width % 2:
            raise ConfigError("base_width must be even so every decoder bottleneck has C/4 >= 1 channels")
        if self.input_size is not None:
            self.check_input(*self.input_size)

    @property
    def widths(self) -> list[int]:
        return [self.base_width * 2**s for s in range(self.encoder_stages + 1)]

    @property
    def size_multiple(self) -> int:
        """Input sides must be multiples of this."""
        return 2**self.encoder_stages * lcm(*self.pp_bins)

    def check_input(self, h: int, w: int) -> None:
        m = self.size_multiple
        if h % m or w % m:
            raise ConfigError(
                f"input {h}x{w} must be divisible by 2**stages * lcm(pp_bins) = {m}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pp_bins"] = list(self.pp_bins)
        d["input_size"] = None if self.input_size is None else list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("input_size") is not None:
            d["input_size"] = tuple(d["input_size"])
        d["pp_bins"] = tuple(d.get("pp_bins", cls.pp_bins))
        return cls(**d)


class Model(Layer):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        widths = cfg.widths
        self.stem = self.add_child("stem", conv_bn_relu(cfg.in_channels, widths[0], 3, rng))
        self.stages = []
        for s in range(1, cfg.encoder_stages + 1):
            blocks = [("block0", BasicBlock(widths[s - 1], widths[s], rng, stride=2))]
            for b in range(1, cfg.blocks_per_stage):
                blocks.append((f"block{b}", BasicBlock(widths[s], widths[s], rng)))
            self.stages.append(self.add_child(f"enc{s}", Sequential(*blocks)))
        self.centre = self.add_child("ppm", PyramidPooling(widths[-1], cfg.pp_bins, rng))
        self.decoders = {}
        for s in range(cfg.encoder_stages, 0, -1):
            self.decoders[s] = self.add_child(f"dec{s}", DecoderBlock(widths[s], widths[s - 1], rng))
        self.head = self.add_child("head", Conv2d(widths[0], 1, 3, rng, bias=True))

    # -- forward / backward -------------------------------------------------

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise F.ShapeMismatch(
                f"expected (n, {self.cfg.in_channels}, h, w) input, got {x.shape}"
            )
        self.cfg.check_input(*x.shape[2:])
        feats = [self.stem.forward(x, train)]
        for stage in self.stages:
            feats.append(stage.forward(feats[-1], train))
        d = self.centre.forward(feats[-1], train)
        for s in range(self.cfg.encoder_stages, 0, -1):
            d = self.decoders[s].forward(d, train) + feats[s - 1]
        return self.head.forward(d, train)

    def backward(self, dlogits):
        """Accumulate parameter gradients; returns the input gradient."""
        d = self.head.backward(dlogits)
        dfeats = [None] * (self.cfg.encoder_stages + 1)
        for s in range(1, self.cfg.encoder_stages + 1):
            dfeats[s - 1] = d
            d = self.decoders[s].backward(d)
        # e_{s-1} feeds both stage s and the decoder skip
        g = self.centre.backward(d)
        for s in range(self.cfg.encoder_stages, 0, -1):
            g = self.stages[s - 1].backward(g) + dfeats[s - 1]
        return self.stem.backward(g)

    # -- state --------------------------------------------------------------

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.value) for n, p in self.named_parameters())

    def gradients(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.grad) for n, p in self.named_parameters())

    def num_parameters(self) -> int:
        return int(sum(p.value.size for _, p in self.named_parameters()))

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Trainable parameters followed by buffers, in construction order."""
        state = OrderedDict((n, p.value) for n, p in self.named_parameters())
        for name, buf, _ in self.named_buffers():
            state[name] = buf
        return state

    def load_state_dict(self, state) -> None:
        own = self.state_dict()
        if list(own) != list(state):
            raise KeyError("state dict names do not match this model")
        params = dict(self.named_parameters())
        buffers = {n: (layer, n.rsplit(".", 1)[-1]) for n, _, layer in self.named_buffers()}
        for name, value in state.items():
            value = np.asarray(value)
            if value.shape != own[name].shape:
                raise ValueError(f"{name}: shape {value.shape} != {own[name].shape}")
            if name in params:
                params[name].value = value.astype(own[name].dtype, copy=True)
            else:
                layer, key = buffers[name]
                layer._buffers[key] = value.astype(own[name].dtype, copy=True)

    def copy_state(self):
        return OrderedDict((k, v.copy()) for k, v in self.state_dict().items())

    def predict_proba(self, x) -> np.ndarray:
        return F.sigmoid(self.forward(x, train=False))


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    """He-normal initialised PP-LinkNet-mu; same seed gives identical weights."""
    cfg.validate()
    return Model(cfg, seed)


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form trainable parameter count, derived from the layer list."""
    w = cfg.widths

    def conv(ci, co, k, bias=False):
        return ci * co * k * k + (co if bias else 0)

    def bn(c):
        return 2 * c

    total = conv(cfg.in_channels, w[0], 3) + bn(w[0])
    for s in range(1, cfg.encoder_stages + 1):
        ci, co = w[s - 1], w[s]
        total += conv(ci, co, 3) + bn(co) + conv(co, co, 3) + bn(co)
        total += conv(ci, co, 1) + bn(co)
        total += (cfg.blocks_per_stage - 1) * (2 * conv(co, co, 3) + 2 * bn(co))
    c = w[-1]
    r = c // 4
    total += len(cfg.pp_bins) * conv(c, r, 1, bias=True)
    total += conv(c + r * len(cfg.pp_bins), c, 3) + bn(c)
    for s in range(1, cfg.encoder_stages + 1):
        ci, co = w[s], w[s - 1]
        mid = ci // 4
        total += conv(ci, mid, 1) + bn(mid)
        total += mid * mid * 16 + bn(mid)
        total += conv(mid, co, 1) + bn(co)
    total += conv(w[0], 1, 3, bias=True)
    return total
