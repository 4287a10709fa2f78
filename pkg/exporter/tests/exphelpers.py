"""Shared helpers for the exporter tests.

Contains an independent, byte-level decoder for the embedding
container and a writer for the binary raster format, both implemented
from the documented layouts rather than the production code, so the
tests cross-check the formats instead of mirroring the implementation.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_U32 = struct.Struct("<I")
_RASTER_HEADER = struct.Struct("<4sIIB")
_DOMAIN_TAGS = {"hu": 0, "normalized": 1}


def write_raster(path, values, domain: str = "normalized") -> Path:
    """Write a binary raster: magic, width, height, domain tag, floats."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(b"IQAI", width, height, _DOMAIN_TAGS[domain]))
        fh.write(arr.tobytes())
    return Path(path)


def make_corpus(
    root,
    n: int = 3,
    height: int = 70,
    width: int = 80,
    seed: int = 5,
    domain: str = "normalized",
) -> Path:
    """Write n raster triplets plus a manifest; returns the manifest path.

    Ids are ``img00``, ``img01``, ...; the denoised and low-dose roles
    share a noisy raster, the reference role holds the clean one.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n):
        if domain == "hu":
            clean = rng.normal(-500.0, 300.0, (height, width))
            noisy = clean + rng.normal(0.0, 40.0, clean.shape)
        else:
            clean = np.clip(rng.normal(0.0, 0.3, (height, width)), -0.9, 0.9)
            noisy = np.clip(clean + rng.normal(0.0, 0.05, clean.shape), -1.0, 1.0)
        write_raster(root / f"hd_{i}.iqai", clean, domain)
        write_raster(root / f"dn_{i}.iqai", noisy, domain)
        images.append(
            {
                "id": f"img{i:02d}",
                "low_dose": f"dn_{i}.iqai",
                "denoised": f"dn_{i}.iqai",
                "reference": f"hd_{i}.iqai",
            }
        )
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"images": images}))
    return manifest


def read_iqae(path):
    """Independent decoder for the embedding container.

    Returns (records, metadata) where records is a list of
    (image_id, tensor_name, float32 array) in file order.  Raises
    AssertionError on any structural deviation from the documented
    layout, so tests fail loudly on malformed output.
    """
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        assert pos + n <= len(data), f"truncated at byte {pos}"
        out = data[pos : pos + n]
        pos += n
        return out

    def u32() -> int:
        return _U32.unpack(take(4))[0]

    def string() -> str:
        return take(u32()).decode("utf-8")

    assert take(4) == b"IQAE", "bad magic"
    assert u32() == 1, "unsupported version"
    count = u32()
    records = []
    metadata: dict = {}
    for _ in range(count):
        image_id = string()
        name = string()
        rank = u32()
        dims = tuple(u32() for _ in range(rank))
        n_values = 1
        for d in dims:
            n_values *= d
        payload = take(4 * n_values)
        if image_id == "__meta__":
            meta = json.loads(name)
            assert isinstance(meta, dict), "metadata must be a JSON object"
            metadata.update(meta)
            continue
        values = np.frombuffer(payload, dtype="<f4").reshape(dims)
        records.append((image_id, name, values))
    assert pos == len(data), f"{len(data) - pos} trailing bytes"
    return records, metadata
