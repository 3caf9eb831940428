"""Binary checkpoint format.

Layout (all integers little-endian ``uint32``)::

    magic      b"PPLK\\xce\\xbc1"  ("PPLK", U+03BC in UTF-8, "1")
    config     length, UTF-8 JSON of the ModelConfig (sorted keys)
    count      number of tensors
    tensor*    name length, name bytes, ndim, dims..., float32 LE payload
    crc32      of every preceding byte
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib
from collections import OrderedDict

import numpy as np

from .model import Model, ModelConfig, build_model

__all__ = ["MAGIC", "CheckpointError", "CheckpointMismatch", "save_checkpoint",
           "load_checkpoint", "checkpoint_bytes", "read_checkpoint_bytes", "load_into"]

MAGIC = "PPLKμ1".encode("utf-8")


class CheckpointError(ValueError):
    pass


class CheckpointMismatch(CheckpointError):
    """The checkpoint's model config differs from the target model."""


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def checkpoint_bytes(cfg: ModelConfig, state) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(_u32(len(blob)))
    buf.write(blob)
    buf.write(_u32(len(state)))
    for name, arr in state.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        buf.write(_u32(len(raw)))
        buf.write(raw)
        buf.write(_u32(arr.ndim))
        for d in arr.shape:
            buf.write(_u32(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = buf.getvalue()
    return body + _u32(zlib.crc32(body) & 0xFFFFFFFF)


def read_checkpoint_bytes(data: bytes) -> tuple[ModelConfig, "OrderedDict[str, np.ndarray]"]:
    if len(data) < len(MAGIC) + 4 or not data.startswith(MAGIC):
        raise CheckpointError("not a PP-LinkNet checkpoint (bad magic)")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("truncated checkpoint")
        out = body[pos : pos + n]
        pos += n
        return out

    def u32():
        return struct.unpack("<I", take(4))[0]

    cfg = ModelConfig.from_dict(json.loads(take(u32()).decode("utf-8")))
    state = OrderedDict()
    for _ in range(u32()):
        name = take(u32()).decode("utf-8")
        shape = tuple(u32() for _ in range(u32()))
        count = int(np.prod(shape)) if shape else 1
        state[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return cfg, state


def save_checkpoint(model: Model, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model.cfg, model.state_dict()))


def load_checkpoint(path: str | os.PathLike) -> Model:
    with open(path, "rb") as fh:
        cfg, state = read_checkpoint_bytes(fh.read())
    model = build_model(cfg, seed=0)
    model.load_state_dict(state)
    return model


def load_into(model: Model, path: str | os.PathLike) -> None:
    """Overwrite ``model``'s weights from a checkpoint with the same config."""
    with open(path, "rb") as fh:
        cfg, state = read_checkpoint_bytes(fh.read())
    if cfg != model.cfg:
        raise CheckpointMismatch(f"checkpoint config {cfg} does not match model config {model.cfg}")
    model.load_state_dict(state)
