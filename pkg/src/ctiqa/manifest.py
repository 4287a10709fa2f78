"""Corpus manifest: which files hold the images, embeddings, and models.

A JSON document whose relative paths are resolved against its own
directory:

    {
      "images": [
        {"id": "img001",
         "low_dose": "ld/img001.iqai",
         "denoised": "dn/img001.iqai",
         "reference": "hd/img001.iqai",     # optional
         "patient": "p01",                   # optional
         "tissue_mask": "masks/t001.iqai",   # optional
         "air_mask": "masks/a001.iqai"}      # optional
      ],
      "embeddings": {"lpips1_denoised": "emb/vgg_dn.iqae", ...},
      "external_scores": {"paq2piq": "scores/paq2piq.csv"},
      "models": {"brisque_svr": "models/brisque.json",
                 "niqe_mvg": "models/niqe.json"}
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FileFormatError

EMBEDDING_KEYS = frozenset({
    "lpips1_denoised", "lpips1_reference",
    "lpips2_denoised", "lpips2_reference",
    "lpips3_denoised", "lpips3_reference",
    "inception_denoised", "inception_softmax", "inception_reference_pool",
})
EXTERNAL_SCORE_KEYS = frozenset({"paq2piq"})
MODEL_KEYS = frozenset({"brisque_svr", "niqe_mvg"})


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    low_dose: Path
    denoised: Path
    reference: Path | None = None
    patient_id: str | None = None
    tissue_mask: Path | None = None
    air_mask: Path | None = None


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    embeddings: dict[str, Path] = field(default_factory=dict)
    external_scores: dict[str, Path] = field(default_factory=dict)
    models: dict[str, Path] = field(default_factory=dict)
    root: Path = Path(".")

    def entry(self, image_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)


def _resolve(root: Path, raw, what: str, optional: bool = False) -> Path | None:
    if raw is None:
        if optional:
            return None
        raise FileFormatError(f"{what}: path missing")
    if not isinstance(raw, str) or not raw:
        raise FileFormatError(f"{what}: path must be a non-empty string")
    path = root / raw
    if not path.exists():
        raise FileFormatError(f"{what}: file not found: {path}")
    return path


def load_manifest(path) -> CorpusManifest:
    """Parse and validate a corpus manifest.

    Raises:
        FileFormatError: malformed JSON, duplicate ids, unknown resource
            keys, or referenced files that do not exist.
    """
    manifest_path = Path(path)
    try:
        data = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: manifest root must be a JSON object")
    unknown = set(data) - {"images", "embeddings", "external_scores", "models"}
    if unknown:
        raise FileFormatError(f"{path}: unknown manifest keys {sorted(unknown)}")
    root = manifest_path.parent
    raw_images = data.get("images", [])
    if not isinstance(raw_images, list):
        raise FileFormatError(f"{path}: 'images' must be a list")
    entries = []
    seen: set[str] = set()
    for i, item in enumerate(raw_images):
        if not isinstance(item, dict):
            raise FileFormatError(f"{path}: images[{i}] must be an object")
        image_id = item.get("id")
        if not isinstance(image_id, str) or not image_id:
            raise FileFormatError(f"{path}: images[{i}] needs a non-empty id")
        if image_id in seen:
            raise FileFormatError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        where = f"{path}: images[{i}] ({image_id})"
        entries.append(ManifestEntry(
            image_id=image_id,
            low_dose=_resolve(root, item.get("low_dose"), f"{where} low_dose"),
            denoised=_resolve(root, item.get("denoised"), f"{where} denoised"),
            reference=_resolve(root, item.get("reference"),
                               f"{where} reference", optional=True),
            patient_id=item.get("patient"),
            tissue_mask=_resolve(root, item.get("tissue_mask"),
                                 f"{where} tissue_mask", optional=True),
            air_mask=_resolve(root, item.get("air_mask"),
                              f"{where} air_mask", optional=True),
        ))

    def load_map(section: str, allowed: frozenset) -> dict[str, Path]:
        raw = data.get(section, {})
        if not isinstance(raw, dict):
            raise FileFormatError(f"{path}: {section!r} must be an object")
        out = {}
        for key, value in raw.items():
            if key not in allowed:
                raise FileFormatError(
                    f"{path}: unknown {section} key {key!r} "
                    f"(known: {sorted(allowed)})"
                )
            out[key] = _resolve(root, value, f"{path}: {section}.{key}")
        return out

    return CorpusManifest(
        entries=tuple(entries),
        embeddings=load_map("embeddings", EMBEDDING_KEYS),
        external_scores=load_map("external_scores", EXTERNAL_SCORE_KEYS),
        models=load_map("models", MODEL_KEYS),
        root=root,
    )
