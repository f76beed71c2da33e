"""Binary checkpoint format for named tensors.

Layout (little-endian)::

    b"AMCK"  u32 version
    u32 metadata_len, metadata (UTF-8 JSON, "{}" when empty)
    u32 tensor_count
    per tensor: u32 name_len, name (UTF-8), u8 trainable, u32 rank,
                rank x u32 dims, prod(dims) x f32 values
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"AMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(named_tensors, metadata=None):
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta)), meta]
    items = list(named_tensors)
    parts.append(struct.pack("<I", len(items)))
    for name, tensor in items:
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(tensor.data, dtype="<f4")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BI", int(tensor.trainable), data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def decode_checkpoint(blob):
    """Return ``(metadata, [(name, array float32, trainable), ...])``."""
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    pos = 4
    (version,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    metadata = json.loads(blob[pos : pos + mlen].decode("utf-8"))
    pos += mlen
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        trainable, rank = struct.unpack_from("<BI", blob, pos)
        pos += 5
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n
        tensors.append((name, arr, bool(trainable)))
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last tensor")
    return metadata, tensors


def save_checkpoint(path, module, metadata=None):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(module.named_parameters(), metadata))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def load_into(module, tensors):
    """Copy decoded tensors into ``module``'s parameters (names and shapes must match)."""
    params = dict(module.named_parameters())
    names = [t[0] for t in tensors]
    if set(names) != set(params):
        missing = sorted(set(params) - set(names))
        extra = sorted(set(names) - set(params))
        raise CheckpointError(f"parameter mismatch: missing={missing} unexpected={extra}")
    from amclab.nn.layers import set_trainable

    for name, arr, trainable in tensors:
        p = params[name]
        if p.data.shape != arr.shape:
            raise CheckpointError(f"{name}: expected shape {p.data.shape}, got {arr.shape}")
        p.data = arr.astype(np.float64)
        set_trainable(p, trainable)
    return module
