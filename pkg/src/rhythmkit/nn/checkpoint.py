"""Binary parameter checkpoints.

Layout (little-endian)::

    b"RKW1" | u32 version | u32 record count
    per record: u32 name length | name (utf-8) | u32 ndim | u32 dims... | f32 payload
    u32 metadata length | metadata (utf-8 JSON, may be empty)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

WEIGHTS_MAGIC = b"RKW1"
VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], metadata: dict | None = None) -> Path:
    path = Path(path)
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", VERSION, len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)) + raw_name)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta)) + meta)
    path.write_bytes(b"".join(chunks))
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not an RKW1 checkpoint")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    params = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            params[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
            pos += 4 * size
        (meta_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        meta = json.loads(raw[pos:pos + meta_len].decode("utf-8")) if meta_len else {}
    except (struct.error, ValueError) as exc:
        raise ValueError(f"{path}: truncated or corrupt checkpoint") from exc
    return params, meta
