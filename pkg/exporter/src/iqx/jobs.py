"""Export job configuration.

An :class:`ExportJob` pins everything one export run depends on: the
corpus manifest, which extractors to run, where each output file goes,
which manifest role feeds the networks, layer selections, the weights
mode, batching, device, and the patch geometry used for pooled patch
features.  Jobs are validated eagerly at construction so a run fails
before any model is built.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import torch

from .errors import JobError
from .networks import BACKBONES, select_taps

EXTRACTORS = ("lpips1", "lpips2", "lpips3", "inception", "paq2piq")
SOURCES = ("denoised", "reference", "low_dose")


@dataclass(frozen=True)
class ExportJob:
    """One export run over a corpus manifest.

    ``outputs`` maps each requested extractor to the file it writes.
    ``layers`` optionally narrows the tap set of individual activation
    extractors; outputs always keep network depth order.  ``weights``
    is ``pretrained``, ``random:<seed>``, or a path to a saved state
    dict.  The display window applies only to rasters stored in raw
    Hounsfield units.
    """

    manifest: Path
    extractors: tuple[str, ...]
    outputs: Mapping[str, Path]
    source: str = "denoised"
    layers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    weights: str = "pretrained"
    batch_size: int = 4
    device: str = "cpu"
    patch_size: int = 50
    patch_stride: int = 25
    window_center: float = -500.0
    window_width: float = 1400.0

    def __post_init__(self):
        object.__setattr__(self, "manifest", Path(self.manifest))
        extractors = tuple(self.extractors)
        if not extractors:
            raise JobError("job must request at least one extractor")
        for name in extractors:
            if name not in EXTRACTORS:
                raise JobError(
                    f"unknown extractor {name!r}; "
                    f"available: {', '.join(EXTRACTORS)}"
                )
        if len(set(extractors)) != len(extractors):
            raise JobError(f"duplicate extractors in {extractors}")
        object.__setattr__(self, "extractors", extractors)

        outputs = {str(k): Path(v) for k, v in dict(self.outputs).items()}
        if set(outputs) != set(extractors):
            raise JobError(
                "outputs must name exactly the requested extractors; "
                f"got outputs for {sorted(outputs)} vs "
                f"extractors {sorted(extractors)}"
            )
        object.__setattr__(self, "outputs", MappingProxyType(outputs))

        if self.source not in SOURCES:
            raise JobError(
                f"unknown source role {self.source!r}; "
                f"available: {', '.join(SOURCES)}"
            )

        layers = {k: tuple(v) for k, v in dict(self.layers).items()}
        for key, selection in layers.items():
            if key not in BACKBONES:
                raise JobError(
                    f"layer selection names {key!r}, which is not an "
                    f"activation extractor"
                )
            if key not in extractors:
                raise JobError(
                    f"layer selection names {key!r}, which the job does "
                    f"not request"
                )
            select_taps(key, selection)
        object.__setattr__(self, "layers", MappingProxyType(layers))

        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise JobError(f"batch_size must be >= 1, got {self.batch_size}")
        if not isinstance(self.patch_size, int) or self.patch_size < 1:
            raise JobError(f"patch_size must be >= 1, got {self.patch_size}")
        if not isinstance(self.patch_stride, int) or self.patch_stride < 1:
            raise JobError(f"patch_stride must be >= 1, got {self.patch_stride}")
        if not (self.window_width > 0):
            raise JobError(
                f"window width must be positive, got {self.window_width}"
            )
        if not isinstance(self.weights, str) or not self.weights:
            raise JobError("weights mode must be a non-empty string")
        try:
            torch.device(self.device)
        except (RuntimeError, ValueError) as exc:
            raise JobError(f"bad device tag {self.device!r}: {exc}") from None

    def selected_layers(self, key: str) -> tuple[str, ...]:
        """The tap names one activation extractor will export, in order."""
        return tuple(
            t.name for t in select_taps(key, self.layers.get(key))
        )


def job_for_directory(
    manifest: str | Path,
    extractors,
    out_dir: str | Path,
    source: str = "denoised",
    **kwargs,
) -> ExportJob:
    """Build a job whose outputs land in one directory.

    Activation and patch-feature containers are named
    ``<extractor>_<source>.iqae``; quality scores are named
    ``paq2piq_<source>.csv``.
    """
    out = Path(out_dir)
    extractors = tuple(extractors)
    outputs: dict[str, Path] = {}
    for name in extractors:
        if name == "paq2piq":
            outputs[name] = out / f"paq2piq_{source}.csv"
        else:
            outputs[name] = out / f"{name}_{source}.iqae"
    return ExportJob(
        manifest=Path(manifest),
        extractors=extractors,
        outputs=outputs,
        source=source,
        **kwargs,
    )
