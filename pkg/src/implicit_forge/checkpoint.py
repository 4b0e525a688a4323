"""Versioned binary checkpoints for named parameter tensors.

Layout (all integers little-endian):

    8 bytes   magic b"IMFORGE1"
    uint32    format version (currently 1)
    uint32    tensor count
    per tensor:
        uint32        name byte length, then UTF-8 name
        uint32        rank, then rank * uint64 extents
        float64[...]  row-major data, little-endian

float64 round-trips bit-exactly.
"""

import struct

import numpy as np

from . import autodiff as ad
from .field import ImplicitFieldParams

MAGIC = b"IMFORGE1"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_tensors(named, path) -> None:
    """Write [(name, Tensor-or-array), ...] preserving order."""
    named = list(named)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(named)))
        for name, tensor in named:
            data = np.ascontiguousarray(getattr(tensor, "data", tensor), dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())


def load_tensors(path):
    """Read back [(name, ndarray), ...] in file order."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    out = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
            off += 8 * n
            out.append((name, data.astype(np.float64)))
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint: {e}") from e
    return out


def save_params(params: ImplicitFieldParams, path) -> None:
    save_tensors(params.named(), path)


def load_params(path) -> ImplicitFieldParams:
    loaded = dict(load_tensors(path))
    kwargs = {}
    from dataclasses import fields
    for f in fields(ImplicitFieldParams):
        if f.name not in loaded:
            raise CheckpointError(f"{path}: missing parameter '{f.name}'")
        t = ad.Tensor(loaded[f.name])
        t.requires_grad = True
        kwargs[f.name] = t
    return ImplicitFieldParams(**kwargs)
