"""Binary checkpoint format for :class:`TinyTransformerConfig` + parameters.

Layout (all little-endian)::

    b"D3MD"                      magic
    u32  format version          (1)
    u32  layers, heads, model_dim, ff_dim, vocab_size, max_len
    f64  rope_base
    u32  tie_embeddings          (0/1)
    per parameter, in declaration order:
        u32 ndim, u32 dim[ndim], f64 data[prod(dim)]   (C order)
"""

from __future__ import annotations

import io
import os
import struct
from typing import Union

import numpy as np

from .transformer import TinyTransformerConfig, param_shapes

MAGIC = b"D3MD"
VERSION = 1
_HEAD = struct.Struct("<4sI6IdI")


class CheckpointError(ValueError):
    pass


def dumps(params: dict, cfg: TinyTransformerConfig) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEAD.pack(MAGIC, VERSION, cfg.layers, cfg.heads, cfg.model_dim, cfg.ff_dim,
                         cfg.vocab_size, cfg.max_len, float(cfg.rope_base), int(cfg.tie_embeddings)))
    for name, shape in param_shapes(cfg).items():
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        if arr.shape != shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match config {shape}")
        buf.write(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes):
    if len(data) < _HEAD.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, *ints, rope_base, tie = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    layers, heads, model_dim, ff_dim, vocab_size, max_len = ints
    cfg = TinyTransformerConfig(layers, heads, model_dim, ff_dim, vocab_size, max_len, rope_base, bool(tie))
    off = _HEAD.size
    params = {}
    try:
        for name, shape in param_shapes(cfg).items():
            (ndim,) = struct.unpack_from("<I", data, off)
            dims = struct.unpack_from(f"<{ndim}I", data, off + 4)
            off += 4 + 4 * ndim
            if tuple(dims) != shape:
                raise CheckpointError(f"{name}: stored shape {dims} does not match config {shape}")
            n = int(np.prod(shape))
            if off + 8 * n > len(data):
                raise CheckpointError(f"truncated checkpoint inside {name}")
            params[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes after last tensor")
    return params, cfg


def save(path: Union[str, os.PathLike], params: dict, cfg: TinyTransformerConfig) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, cfg))


def load(path: Union[str, os.PathLike]):
    with open(path, "rb") as fh:
        return loads(fh.read())
