"""Corpus manifest reading.

A manifest is a JSON object whose ``images`` array lists per-image
records: an ``id`` string plus role paths such as ``low_dose``,
``denoised``, and ``reference``.  Relative paths resolve against the
manifest's directory.  Only ids and role paths are consumed here; the
other manifest sections describe resources this package produces
rather than consumes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import ManifestError

ROLES = ("denoised", "reference", "low_dose")


@dataclass(frozen=True)
class CorpusImage:
    """One manifest entry: its id and whatever role paths it declares."""

    image_id: str
    paths: Mapping[str, Path]

    def __post_init__(self):
        object.__setattr__(self, "paths", MappingProxyType(dict(self.paths)))


def read_manifest(path: str | Path) -> tuple[CorpusImage, ...]:
    """Parse a corpus manifest, preserving image order.

    Raises:
        ManifestError: missing or malformed file, non-object root,
            missing ``images`` array, entries that are not objects,
            missing/empty/duplicate ids, or non-string role paths.
    """
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest root must be a JSON object")
    images = doc.get("images")
    if not isinstance(images, list) or not images:
        raise ManifestError(f"{path}: manifest needs a non-empty 'images' array")
    base = path.resolve().parent
    entries: list[CorpusImage] = []
    seen: set[str] = set()
    for i, item in enumerate(images):
        if not isinstance(item, dict):
            raise ManifestError(f"{path}: images[{i}] is not an object")
        image_id = item.get("id")
        if not isinstance(image_id, str) or not image_id:
            raise ManifestError(
                f"{path}: images[{i}] needs a non-empty string 'id'"
            )
        if image_id in seen:
            raise ManifestError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        paths: dict[str, Path] = {}
        for role in ROLES:
            value = item.get(role)
            if value is None:
                continue
            if not isinstance(value, str) or not value:
                raise ManifestError(
                    f"{path}: images[{i}].{role} must be a non-empty string"
                )
            paths[role] = (base / value).resolve()
        entries.append(CorpusImage(image_id, paths))
    return tuple(entries)


def role_paths(
    entries: tuple[CorpusImage, ...], role: str, manifest: str | Path
) -> list[tuple[str, Path]]:
    """(id, path) pairs for one role, in manifest order.

    Every entry must declare the role and the file must exist, so jobs
    fail before any network is built.

    Raises:
        ManifestError: an entry lacks the role or its file is missing.
    """
    out: list[tuple[str, Path]] = []
    for entry in entries:
        p = entry.paths.get(role)
        if p is None:
            raise ManifestError(
                f"{manifest}: image {entry.image_id!r} has no {role!r} path"
            )
        if not p.is_file():
            raise ManifestError(
                f"{manifest}: image {entry.image_id!r}: {role} file not "
                f"found: {p}"
            )
        out.append((entry.image_id, p))
    return out
