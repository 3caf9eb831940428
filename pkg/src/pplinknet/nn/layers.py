"""Stateful layers built on :mod:`pplinknet.nn.functional`.

A layer owns named parameters (trainable, with a ``.grad``) and buffers
(non-trainable state such as batch-norm running statistics). ``forward``
caches what ``backward`` needs; ``backward`` accumulates parameter gradients
and returns the input gradient.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


class Layer:
    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Layer] = {}

    def add_param(self, name: str, value: np.ndarray) -> Parameter:
        p = Parameter(value)
        self._params[name] = p
        return p

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def add_child(self, name: str, layer: "Layer") -> "Layer":
        self._children[name] = layer
        return layer

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, "Layer"]]:
        for name, b in self._buffers.items():
            yield prefix + name, b, self
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad[...] = 0

    def astype(self, dtype) -> None:
        for _, p in self.named_parameters():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        for layer in self.modules():
            for k, v in layer._buffers.items():
                layer._buffers[k] = v.astype(dtype)

    def modules(self) -> Iterator["Layer"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def forward(self, x, train: bool):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def he_normal(rng: np.random.Generator, shape, fan_in: float, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Layer):
    def __init__(self, c_in, c_out, k, rng, stride=1, pad=None, bias=False):
        super().__init__()
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        self.weight = self.add_param("weight", he_normal(rng, (c_out, c_in, k, k), c_in * k * k))
        self.bias = self.add_param("bias", np.zeros(c_out, np.float32)) if bias else None
        self._cache = None

    def forward(self, x, train):
        b = None if self.bias is None else self.bias.value
        out, self._cache = F.conv2d(x, self.weight.value, b, self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv2d_backward(dout, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        self._cache = None
        return dx


class ConvTranspose2d(Layer):
    def __init__(self, c_in, c_out, rng, k=4, stride=2, pad=1, bias=False):
        super().__init__()
        self.stride, self.pad = stride, pad
        fan_in = c_in * k * k / (stride * stride)
        self.weight = self.add_param("weight", he_normal(rng, (c_in, c_out, k, k), fan_in))
        self.bias = self.add_param("bias", np.zeros(c_out, np.float32)) if bias else None
        self._cache = None

    def forward(self, x, train):
        b = None if self.bias is None else self.bias.value
        out, self._cache = F.conv_transpose2d(x, self.weight.value, b, self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv_transpose2d_backward(dout, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        self._cache = None
        return dx


class BatchNorm2d(Layer):
    def __init__(self, c, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = self.add_param("gamma", np.ones(c, np.float32))
        self.beta = self.add_param("beta", np.zeros(c, np.float32))
        self.add_buffer("running_mean", np.zeros(c, np.float32))
        self.add_buffer("running_var", np.ones(c, np.float32))
        self._cache = None

    def forward(self, x, train):
        out, self._cache = F.batch_norm(
            x, self.gamma.value, self.beta.value,
            self._buffers["running_mean"], self._buffers["running_var"],
            train, self.momentum, self.eps,
        )
        return out

    def backward(self, dout):
        dx, dg, db = F.batch_norm_backward(dout, self._cache)
        self.gamma.grad += dg
        self.beta.grad += db
        self._cache = None
        return dx


class ReLU(Layer):
    def forward(self, x, train):
        out, self._mask = F.relu(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._mask)


class Sequential(Layer):
    def __init__(self, *named_layers: tuple[str, Layer]):
        super().__init__()
        self.order = []
        for name, layer in named_layers:
            self.add_child(name, layer)
            self.order.append(layer)

    def forward(self, x, train):
        for layer in self.order:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.order):
            dout = layer.backward(dout)
        return dout


def conv_bn_relu(c_in, c_out, k, rng, stride=1) -> Sequential:
    return Sequential(
        ("conv", Conv2d(c_in, c_out, k, rng, stride=stride)),
        ("bn", BatchNorm2d(c_out)),
        ("relu", ReLU()),
    )


class BasicBlock(Layer):
    """ResNet basic block: conv-BN-ReLU-conv-BN plus (projected) skip, then ReLU."""

    def __init__(self, c_in, c_out, rng, stride=1):
        super().__init__()
        self.body = self.add_child("body", Sequential(
            ("conv1", Conv2d(c_in, c_out, 3, rng, stride=stride)),
            ("bn1", BatchNorm2d(c_out)),
            ("relu1", ReLU()),
            ("conv2", Conv2d(c_out, c_out, 3, rng)),
            ("bn2", BatchNorm2d(c_out)),
        ))
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = self.add_child("shortcut", Sequential(
                ("conv", Conv2d(c_in, c_out, 1, rng, stride=stride)),
                ("bn", BatchNorm2d(c_out)),
            ))
        self.relu = ReLU()

    def forward(self, x, train):
        skip = x if self.shortcut is None else self.shortcut.forward(x, train)
        return self.relu.forward(self.body.forward(x, train) + skip, train)

    def backward(self, dout):
        d = self.relu.backward(dout)
        dx = self.body.backward(d)
        dx += d if self.shortcut is None else self.shortcut.backward(d)
        return dx


class PyramidPooling(Layer):
    """Multi-bin average-pool context block.

    Each bin ``b`` pools to ``b x b``, projects to ``C/4`` channels with a
    1x1 conv and is bilinearly upsampled back; the branches are concatenated
    with the input and fused by a 3x3 conv-BN-ReLU back to ``C`` channels.
    """

    def __init__(self, c, bins, rng):
        super().__init__()
        if c % 4:
            raise F.ShapeMismatch(f"pyramid pooling needs channels divisible by 4, got {c}")
        self.bins = tuple(bins)
        self.reduced = c // 4
        self.branches = [
            self.add_child(f"branch{b}", Conv2d(c, self.reduced, 1, rng, bias=True))
            for b in self.bins
        ]
        self.fuse = self.add_child("fuse", conv_bn_relu(c + self.reduced * len(self.bins), c, 3, rng))
        self._caches = None

    def forward(self, x, train):
        h, w = x.shape[2:]
        parts, caches = [x], []
        for b, conv in zip(self.bins, self.branches):
            pooled, pc = F.adaptive_avg_pool2d(x, b)
            proj = conv.forward(pooled, train)
            up, uc = F.bilinear_upsample(proj, h, w)
            parts.append(up)
            caches.append((pc, uc))
        self._caches = caches
        return self.fuse.forward(np.concatenate(parts, axis=1), train)

    def backward(self, dout):
        dcat = self.fuse.backward(dout)
        c = dcat.shape[1] - self.reduced * len(self.bins)
        dx = dcat[:, :c].copy()
        for i, (conv, (pc, uc)) in enumerate(zip(self.branches, self._caches)):
            lo = c + i * self.reduced
            dup = dcat[:, lo : lo + self.reduced]
            dproj = F.bilinear_upsample_backward(dup, uc)
            dpooled = conv.backward(dproj)
            dx += F.adaptive_avg_pool2d_backward(dpooled, pc)
        self._caches = None
        return dx


class DecoderBlock(Layer):
    """LinkNet bottleneck: 1x1 to C/4, 2x transposed conv, 1x1 to ``c_out``."""

    def __init__(self, c_in, c_out, rng):
        super().__init__()
        mid = max(c_in // 4, 1)
        self.seq = self.add_child("seq", Sequential(
            ("reduce", conv_bn_relu(c_in, mid, 1, rng)),
            ("up", Sequential(
                ("deconv", ConvTranspose2d(mid, mid, rng)),
                ("bn", BatchNorm2d(mid)),
                ("relu", ReLU()),
            )),
            ("expand", conv_bn_relu(mid, c_out, 1, rng)),
        ))

    def forward(self, x, train):
        return self.seq.forward(x, train)

    def backward(self, dout):
        return self.seq.backward(dout)
