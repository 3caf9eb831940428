"""Forward/backward kernels on NCHW numpy arrays.

Every forward returns ``(out, cache)``; the matching ``*_backward`` takes the
upstream gradient and the cache. Kernels keep the input dtype, so the same
code runs in float32 for training and float64 for gradient certification.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeMismatch",
    "conv2d",
    "conv2d_backward",
    "conv_transpose2d",
    "conv_transpose2d_backward",
    "batch_norm",
    "batch_norm_backward",
    "relu",
    "relu_backward",
    "max_pool2d",
    "max_pool2d_backward",
    "adaptive_avg_pool2d",
    "adaptive_avg_pool2d_backward",
    "bilinear_matrix",
    "bilinear_upsample",
    "bilinear_upsample_backward",
    "sigmoid",
]


class ShapeMismatch(ValueError):
    pass


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    """Patch matrix of ``xp`` (already padded): rows are output positions."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def _col2im(dcols: np.ndarray, shape, kh: int, kw: int, stride: int, ho: int, wo: int):
    """Adjoint of :func:`_im2col`: scatter-add patches back into ``shape``."""
    n, c = shape[:2]
    out = np.zeros(shape, dtype=dcols.dtype)
    d = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d[:, :, i, j]
    return out


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0):
    """Cross-correlation with ``weight`` of shape ``(c_out, c_in, kh, kw)``."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernel {weight.shape}")
    if stride < 1 or pad < 0:
        raise ValueError("conv2d needs stride >= 1 and pad >= 0")
    c_out, _, kh, kw = weight.shape
    n = x.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} larger than padded input")
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = weight.reshape(c_out, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias
    out = out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    cache = (cols, weight, xp.shape, stride, pad, ho, wo, bias is not None)
    return np.ascontiguousarray(out), cache


def conv2d_backward(dout, cache):
    cols, weight, xp_shape, stride, pad, ho, wo, has_bias = cache
    c_out, _, kh, kw = weight.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = (dmat.T @ cols).reshape(weight.shape)
    db = dmat.sum(axis=0) if has_bias else None
    dcols = dmat @ weight.reshape(c_out, -1)
    dxp = _col2im(dcols, xp_shape, kh, kw, stride, ho, wo)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dxp), dw, db


def conv_transpose2d(x, weight, bias=None, stride: int = 2, pad: int = 1):
    """Transposed convolution with ``weight`` of shape ``(c_in, c_out, k, k)``.

    This is the exact adjoint of :func:`conv2d` run with the same kernel,
    stride and padding; output size is ``(h - 1) * stride - 2 * pad + k``.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d: input {x.shape} vs kernel {weight.shape}")
    c_in, c_out, kh, kw = weight.shape
    if kh < stride or kw < stride:
        raise ShapeMismatch("conv_transpose2d needs kernel size >= stride")
    n, _, h, w = x.shape
    full = (n, c_out, (h - 1) * stride + kh, (w - 1) * stride + kw)
    xmat = x.transpose(0, 2, 3, 1).reshape(-1, c_in)
    cols = xmat @ weight.reshape(c_in, -1)
    out = _col2im(cols, full, kh, kw, stride, h, w)
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    if out.shape[2] < 1 or out.shape[3] < 1:
        raise ShapeMismatch("conv_transpose2d: padding removes the whole output")
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1)
    cache = (xmat, weight, x.shape, stride, pad, bias is not None)
    return np.ascontiguousarray(out), cache


def conv_transpose2d_backward(dout, cache):
    xmat, weight, x_shape, stride, pad, has_bias = cache
    c_in, c_out, kh, kw = weight.shape
    n, _, h, w = x_shape
    dp = np.pad(dout, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else dout
    dcols, ho, wo = _im2col(dp, kh, kw, stride)
    assert (ho, wo) == (h, w)
    dx = (dcols @ weight.reshape(c_in, -1).T).reshape(n, h, w, c_in).transpose(0, 3, 1, 2)
    dw = (xmat.T @ dcols).reshape(weight.shape)
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    return np.ascontiguousarray(dx), dw, db


def batch_norm(x, gamma, beta, running_mean, running_var, train: bool,
               momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel batch normalisation.

    In train mode the batch statistics normalise the input and the running
    buffers are updated in place (unbiased variance, as is customary).
    """
    c = x.shape[1]
    shape = (1, c, 1, 1)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.size // c
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean.astype(x.dtype), running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = xhat * gamma.reshape(shape) + beta.reshape(shape)
    return out, (xhat, gamma, inv_std, train)


def batch_norm_backward(dout, cache):
    xhat, gamma, inv_std, train = cache
    shape = (1, -1, 1, 1)
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(shape)
    if train:
        m = dout.size // dout.shape[1]
        dx = (inv_std.reshape(shape) / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3)).reshape(shape)
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(shape)
        )
    else:
        dx = dxhat * inv_std.reshape(shape)
    return dx, dgamma, dbeta


def relu(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def max_pool2d(x, size: int = 2):
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeMismatch(f"max_pool2d: {h}x{w} not divisible by {size}")
    blocks = x.reshape(n, c, h // size, size, w // size, size).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // size, w // size, size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape, size)


def max_pool2d_backward(dout, cache):
    arg, shape, size = cache
    n, c, h, w = shape
    flat = np.zeros((n, c, h // size, w // size, size * size), dtype=dout.dtype)
    np.put_along_axis(flat, arg[..., None], dout[..., None], axis=-1)
    blocks = flat.reshape(n, c, h // size, w // size, size, size).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(shape)


def adaptive_avg_pool2d(x, bins: int):
    """Average over a ``bins x bins`` grid of disjoint equal cells."""
    n, c, h, w = x.shape
    if h % bins or w % bins:
        raise ShapeMismatch(f"adaptive_avg_pool2d: {h}x{w} not divisible by {bins} bins")
    out = x.reshape(n, c, bins, h // bins, bins, w // bins).mean(axis=(3, 5))
    return out, (x.shape, bins)


def adaptive_avg_pool2d_backward(dout, cache):
    (n, c, h, w), bins = cache
    ch, cw = h // bins, w // bins
    dx = np.repeat(np.repeat(dout, ch, axis=2), cw, axis=3)
    return dx / (ch * cw)


def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """``n_out x n_in`` interpolation weights, half-pixel (align_corners=False)."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, None)
    i0 = np.minimum(np.floor(src).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    lam = src - i0
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - lam)
    np.add.at(mat, (rows, i1), lam)
    return mat.astype(dtype)


def bilinear_upsample(x, out_h: int, out_w: int):
    n, c, h, w = x.shape
    if out_h < h or out_w < w:
        raise ShapeMismatch("bilinear_upsample only enlarges")
    ah = bilinear_matrix(h, out_h, x.dtype)
    aw = bilinear_matrix(w, out_w, x.dtype)
    return ah @ x @ aw.T, (ah, aw)


def bilinear_upsample_backward(dout, cache):
    ah, aw = cache
    return ah.T @ dout @ aw


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
