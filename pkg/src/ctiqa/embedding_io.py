"""Reader/writer for the binary embedding container (IQAE).

Layout: magic ``IQAE``, u32 version, u32 record count, then records.
Each record is a length-prefixed UTF-8 image id, a length-prefixed
UTF-8 tensor name, a u32 rank, ``rank`` u32 dims, and the row-major
little-endian float32 payload.

File-level metadata (extractor name, layer order, weights hash, ...)
travels as one conventional record with image id ``__meta__`` whose
tensor-name field holds a JSON object and whose payload is empty
(rank 1, dims [0]).  Readers surface it separately from data records.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FileFormatError, ShapeError
from .paired import ActivationLayer, ActivationStack

IQAE_MAGIC = b"IQAE"
IQAE_VERSION = 1
META_ID = "__meta__"

_U32 = struct.Struct("<I")
_MAX_STR = 1 << 20
_MAX_RANK = 8


@dataclass(frozen=True)
class EmbeddingRecord:
    """One named tensor belonging to one image."""

    image_id: str
    tensor_name: str
    array: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.array, dtype=np.float32)
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)


@dataclass(frozen=True)
class EmbeddingFile:
    """Parsed embedding container: data records plus metadata."""

    records: tuple[EmbeddingRecord, ...]
    metadata: dict = field(default_factory=dict)

    def image_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.image_id, None)
        return list(seen)

    def by_image(self, image_id: str) -> list[EmbeddingRecord]:
        return [r for r in self.records if r.image_id == image_id]

    def tensors_of(self, image_id: str) -> dict[str, np.ndarray]:
        """Name-to-array map for one image, first record wins per name."""
        out: dict[str, np.ndarray] = {}
        for rec in self.by_image(image_id):
            out.setdefault(rec.tensor_name, rec.array)
        return out

    def pooled(self, tensor_name: str) -> np.ndarray:
        """All records of one tensor name stacked into an n x d matrix.

        Rank-1 records contribute one row; rank-2 records contribute
        their rows.
        """
        parts = []
        for rec in self.records:
            if rec.tensor_name != tensor_name:
                continue
            arr = np.asarray(rec.array, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[None, :]
            elif arr.ndim != 2:
                raise ShapeError(
                    f"record {rec.image_id}/{tensor_name} has rank {arr.ndim}, "
                    "cannot pool"
                )
            parts.append(arr)
        if not parts:
            raise FileFormatError(f"no records named {tensor_name!r}")
        widths = {p.shape[1] for p in parts}
        if len(widths) != 1:
            raise ShapeError(
                f"records named {tensor_name!r} disagree on width: {sorted(widths)}"
            )
        return np.vstack(parts)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def write_embeddings(path, records: Iterable[EmbeddingRecord],
                     metadata: dict | None = None) -> None:
    """Write records (and optional metadata) to an embedding file."""
    recs = list(records)
    chunks = [IQAE_MAGIC, _U32.pack(IQAE_VERSION)]
    count = len(recs) + (1 if metadata is not None else 0)
    chunks.append(_U32.pack(count))
    if metadata is not None:
        meta_json = json.dumps(metadata, sort_keys=True)
        chunks.append(_pack_str(META_ID))
        chunks.append(_pack_str(meta_json))
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
    Path(path).write_bytes(b"".join(chunks))


class _Cursor:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FileFormatError(f"{self.path}: truncated at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def string(self, what: str) -> str:
        n = self.u32()
        if n > _MAX_STR:
            raise FileFormatError(f"{self.path}: unreasonable {what} length {n}")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FileFormatError(f"{self.path}: bad {what}: {exc}") from None


def read_embeddings(path) -> EmbeddingFile:
    """Parse an embedding file.

    Raises:
        FileFormatError: bad magic, unsupported version, truncation,
            or malformed metadata.
    """
    cur = _Cursor(Path(path).read_bytes(), path)
    if cur.take(4) != IQAE_MAGIC:
        raise FileFormatError(f"{path}: bad magic")
    version = cur.u32()
    if version != IQAE_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    count = cur.u32()
    records: list[EmbeddingRecord] = []
    metadata: dict = {}
    for _ in range(count):
        image_id = cur.string("image id")
        tensor_name = cur.string("tensor name")
        rank = cur.u32()
        if rank > _MAX_RANK:
            raise FileFormatError(f"{path}: unreasonable rank {rank}")
        dims = tuple(cur.u32() for _ in range(rank))
        n_values = 1
        for dim in dims:
            n_values *= dim
        payload = cur.take(4 * n_values)
        if image_id == META_ID:
            try:
                meta = json.loads(tensor_name)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}: bad metadata JSON: {exc}") from None
            if not isinstance(meta, dict):
                raise FileFormatError(f"{path}: metadata must be a JSON object")
            metadata.update(meta)
            continue
        values = np.frombuffer(payload, dtype="<f4")
        records.append(
            EmbeddingRecord(image_id, tensor_name, values.reshape(dims))
        )
    if cur.pos != len(cur.data):
        raise FileFormatError(
            f"{path}: {len(cur.data) - cur.pos} trailing bytes after last record"
        )
    return EmbeddingFile(records=tuple(records), metadata=metadata)


def load_activation_stacks(path) -> tuple[dict[str, ActivationStack], dict]:
    """Read per-image activation stacks from an embedding file.

    Every data record must be rank 3 (rows x cols x channels); layer
    order follows record order within the file.  Returns the stacks
    keyed by image id plus the file metadata.
    """
    parsed = read_embeddings(path)
    layers: dict[str, list[ActivationLayer]] = {}
    for rec in parsed.records:
        if rec.array.ndim != 3:
            raise FileFormatError(
                f"{path}: record {rec.image_id}/{rec.tensor_name} has rank "
                f"{rec.array.ndim}, activation stacks need rank 3"
            )
        layers.setdefault(rec.image_id, []).append(
            ActivationLayer(rec.tensor_name, rec.array)
        )
    stacks = {
        image_id: ActivationStack(tuple(ls)) for image_id, ls in layers.items()
    }
    return stacks, parsed.metadata
