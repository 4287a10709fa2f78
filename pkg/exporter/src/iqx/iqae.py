"""Writer for the binary embedding container (IQAE).

Layout: magic ``IQAE``, u32 version, u32 record count, then records.
Each record is a length-prefixed UTF-8 image id, a length-prefixed
UTF-8 tensor name, a u32 rank, ``rank`` u32 dims, and the row-major
little-endian float32 payload.

File-level metadata (extractor name, layer order, weights hash, ...)
travels as one conventional record with image id ``__meta__`` whose
tensor-name field holds a JSON object and whose payload is empty
(rank 1, dims [0]).  The metadata record is written first so readers
can surface it before any data.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

IQAE_MAGIC = b"IQAE"
IQAE_VERSION = 1
META_ID = "__meta__"

_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class TensorRecord:
    """One named float32 tensor belonging to one image."""

    image_id: str
    tensor_name: str
    array: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.array, dtype=np.float32)
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def write_iqae(
    path: str | Path,
    records: Iterable[TensorRecord],
    metadata: dict,
) -> Path:
    """Write one embedding container and return its path.

    The metadata dict is serialized with sorted keys, so a fixed
    configuration always produces byte-identical headers.  Parent
    directories are created as needed.
    """
    recs = list(records)
    chunks = [IQAE_MAGIC, _U32.pack(IQAE_VERSION), _U32.pack(len(recs) + 1)]
    chunks.append(_pack_str(META_ID))
    chunks.append(_pack_str(json.dumps(metadata, sort_keys=True)))
    chunks.append(_U32.pack(1))
    chunks.append(_U32.pack(0))
    for rec in recs:
        arr = rec.array
        chunks.append(_pack_str(rec.image_id))
        chunks.append(_pack_str(rec.tensor_name))
        chunks.append(_U32.pack(arr.ndim))
        for dim in arr.shape:
            chunks.append(_U32.pack(dim))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(b"".join(chunks))
    return out
