"""Binary model checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"DLADCKPT"
    u32       format version (currently 1)
    u32       header length H
    H bytes   UTF-8 JSON header: {"spec": ..., "shapes": [[...], ...], "meta": {...}}
    ...       each array of ModelParams.arrays() in order, raw '<f8'

The file is a pure function of its inputs, so equal models give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import ModelParams, ModelSpec

MAGIC = b"DLADCKPT"
FORMAT_VERSION = 1


def dumps(spec: ModelSpec, params: ModelParams, meta: dict | None = None) -> bytes:
    params.check(spec)
    arrays = params.arrays()
    header = json.dumps(
        {"spec": spec.to_dict(), "shapes": [list(a.shape) for a in arrays], "meta": meta or {}},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header]
    parts.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return b"".join(parts)


def loads(raw: bytes) -> tuple[ModelSpec, ModelParams, dict]:
    if raw[:8] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    if len(raw) < 16:
        raise FormatError("truncated checkpoint header")
    version, header_len = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from None
    spec = ModelSpec.from_dict(header["spec"])
    offset = 16 + header_len
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(raw):
            raise FormatError("truncated checkpoint body")
        arrays.append(np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
        offset = end
    if offset != len(raw):
        raise FormatError("trailing bytes after checkpoint body")
    params = ModelParams.from_arrays(arrays)
    params.check(spec)
    return spec, params, header.get("meta", {})


def save(path, spec: ModelSpec, params: ModelParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(spec, params, meta))


def load(path) -> tuple[ModelSpec, ModelParams, dict]:
    return loads(Path(path).read_bytes())
