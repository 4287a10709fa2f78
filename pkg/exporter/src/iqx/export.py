"""Export operations: activation stacks, pooled patch features with
class probabilities, and blind quality scores.

Every operation streams the corpus in manifest order, runs its
network in inference mode, and writes outputs whose image ids mirror
the manifest exactly — same ids, same order, nothing added or
dropped.  Consecutive same-shape images are batched together for
throughput; batching never reorders records.  Each output file
carries a JSON header recording the extractor configuration and the
SHA-256 fingerprint of the weights that produced it, so re-running a
job with the same weights yields byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import torch

from . import networks
from .errors import ExporterError, JobError, RasterError
from .iqae import TensorRecord, write_iqae
from .jobs import ExportJob
from .manifest import read_manifest, role_paths
from .rasters import load_raster, to_unit_interval

_STANDARDIZATION = {
    "value_range": "[-1, 1] mapped to [0, 1]",
    "channels": "grayscale replicated to 3",
    "mean": list(networks.IMAGENET_MEAN),
    "std": list(networks.IMAGENET_STD),
}


def _entries(job: ExportJob) -> list[tuple[str, Path]]:
    return role_paths(read_manifest(job.manifest), job.source, job.manifest)


def _unit_grid(image_id: str, path: Path, job: ExportJob) -> np.ndarray:
    try:
        raster = load_raster(path)
    except RasterError as exc:
        raise RasterError(f"image {image_id!r}: {exc}") from None
    return to_unit_interval(raster, job.window_center, job.window_width)


def _shape_batches(
    items: Sequence[tuple[str, np.ndarray]], batch_size: int
) -> Iterator[list[tuple[str, np.ndarray]]]:
    """Split into order-preserving batches of consecutive same-shape grids."""
    batch: list[tuple[str, np.ndarray]] = []
    for item in items:
        if batch and (
            len(batch) >= batch_size or batch[0][1].shape != item[1].shape
        ):
            yield batch
            batch = []
        batch.append(item)
    if batch:
        yield batch


def _chunks(seq: Sequence, size: int) -> Iterator[Sequence]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def _base_metadata(job: ExportJob, network: str, weights_hash: str) -> dict:
    return {
        "source": job.source,
        "network": network,
        "weights_mode": job.weights,
        "weights_hash": weights_hash,
        "device": job.device,
        "input_standardization": _STANDARDIZATION,
        "writer": "iqx",
    }


def _check_ids(written: Iterable[str], expected: Sequence[str], path: Path) -> None:
    written = list(written)
    if written != list(expected):
        raise ExporterError(
            f"{path}: output ids diverged from the manifest "
            f"({written[:3]}... vs {list(expected)[:3]}...)"
        )


def export_activations(job: ExportJob) -> dict[str, Path]:
    """Write one activation-stack container per requested lpips extractor.

    Each image contributes one rank-3 record (rows x cols x channels)
    per selected layer, grouped per image in manifest order with
    layers in network depth order.  The header records the layer
    names verbatim in that order, so readers never need to know the
    backbone's structure.

    Returns extractor-name -> written path.

    Raises:
        JobError: the job requests no activation extractor.
        ManifestError / RasterError / WeightsError / InferenceError:
            propagated from the corresponding stage.
    """
    keys = [k for k in job.extractors if k in networks.BACKBONES]
    if not keys:
        raise JobError("job requests no activation extractor")
    entries = _entries(job)
    grids = [(i, _unit_grid(i, p, job)) for i, p in entries]
    written: dict[str, Path] = {}
    for key in keys:
        extractor = networks.FeatureExtractor(
            key, job.weights, job.layers.get(key), job.device
        )
        per_image: dict[str, list[TensorRecord]] = {}
        for batch in _shape_batches(grids, job.batch_size):
            x = networks.input_tensor([g for _, g in batch])
            taps = extractor.run(x)
            for j, (image_id, _) in enumerate(batch):
                per_image[image_id] = [
                    TensorRecord(
                        image_id,
                        tap.name,
                        taps[tap.name][j].permute(1, 2, 0).contiguous().numpy(),
                    )
                    for tap in extractor.taps
                ]
        records = [rec for i, _ in entries for rec in per_image[i]]
        metadata = _base_metadata(job, extractor.network, extractor.weights_hash)
        metadata.update(
            {
                "format": "activation-stack",
                "extractor": key,
                "layers": [t.name for t in extractor.taps],
                "layer_channels": {t.name: t.channels for t in extractor.taps},
            }
        )
        path = write_iqae(job.outputs[key], records, metadata)
        _check_ids(
            dict.fromkeys(r.image_id for r in records),
            [i for i, _ in entries],
            path,
        )
        written[key] = path
    return written


def _patch_grid(values: np.ndarray, size: int, stride: int) -> list[np.ndarray]:
    """Square patches on a regular grid, top-left anchored, row-major.

    Origins run over 0, stride, 2*stride, ... along each axis for as
    long as the full patch fits; partial border patches are dropped.
    """
    height, width = values.shape
    if size > height or size > width:
        raise RasterError(
            f"patch size {size} exceeds image dimensions {width}x{height}"
        )
    n_rows = (height - size) // stride + 1
    n_cols = (width - size) // stride + 1
    return [
        values[r * stride : r * stride + size, c * stride : c * stride + size]
        for r in range(n_rows)
        for c in range(n_cols)
    ]


def export_inception(job: ExportJob) -> Path:
    """Write pooled feature vectors and class-probability rows per image.

    Each image is cut into square patches (``patch_size`` /
    ``patch_stride``, top-left anchored, full patches only), every
    patch is bilinearly upscaled to the network input side, and the
    batch flows through the network once.  Per image the container
    holds a ``pool`` record (n_patches x 2048, the output of the
    ``avgpool`` pooling layer) and a ``softmax`` record (n_patches x
    1000); probability rows sum to 1 within float round-off.

    Raises:
        JobError: the job does not request the patch-feature extractor.
        RasterError: an image is smaller than the patch size.
    """
    if "inception" not in job.extractors:
        raise JobError("job does not request the patch-feature extractor")
    entries = _entries(job)
    runner = networks.InceptionRunner(job.weights, job.device)
    records: list[TensorRecord] = []
    for image_id, path in entries:
        grid = _unit_grid(image_id, path, job)
        try:
            patches = _patch_grid(grid, job.patch_size, job.patch_stride)
        except RasterError as exc:
            raise RasterError(f"image {image_id!r}: {exc}") from None
        pools: list[np.ndarray] = []
        probs: list[np.ndarray] = []
        for chunk in _chunks(patches, job.batch_size):
            x = networks.replicate_channels(chunk)
            x = networks.upscale(x, networks.INCEPTION_INPUT)
            x = networks.standardize(x)
            pool, prob = runner.run(x)
            pools.append(pool)
            probs.append(prob)
        records.append(TensorRecord(image_id, "pool", np.vstack(pools)))
        records.append(
            TensorRecord(image_id, "softmax", np.vstack(probs).astype(np.float32))
        )
    metadata = _base_metadata(job, runner.network, runner.weights_hash)
    metadata.update(
        {
            "format": "patch-features",
            "extractor": "inception",
            "pool_layer": networks.POOL_LAYER,
            "pool_dim": networks.POOL_DIM,
            "n_classes": networks.N_CLASSES,
            "patch_size": job.patch_size,
            "patch_stride": job.patch_stride,
            "network_input": networks.INCEPTION_INPUT,
        }
    )
    path = write_iqae(job.outputs["inception"], records, metadata)
    _check_ids(
        dict.fromkeys(r.image_id for r in records),
        [i for i, _ in entries],
        path,
    )
    return path


def export_paq2piq(job: ExportJob) -> Path:
    """Write one blind quality score per manifest id as CSV.

    Images are upscaled to the quality network's input side and scored
    in one forward pass each; the CSV holds an ``image_id,score``
    header plus one finite score per id, in manifest order.  A sidecar
    ``<output>.meta.json`` records the network, weights mode, and
    weights fingerprint (CSV rows cannot carry header fields).

    Raises:
        JobError: the job does not request the quality predictor.
        ExporterError: the network produced a non-finite score.
    """
    if "paq2piq" not in job.extractors:
        raise JobError("job does not request the quality predictor")
    entries = _entries(job)
    runner = networks.QualityRunner(job.weights, job.device)
    scores: list[tuple[str, float]] = []
    for chunk in _chunks(entries, job.batch_size):
        grids = [_unit_grid(i, p, job) for i, p in chunk]
        parts = []
        for grid in grids:
            x = networks.replicate_channels([grid])
            x = networks.upscale(x, networks.QUALITY_INPUT)
            parts.append(x)
        x = networks.standardize(torch.cat(parts, dim=0))
        values = runner.run(x)
        for (image_id, _), value in zip(chunk, values):
            value = float(value)
            if not np.isfinite(value):
                raise ExporterError(
                    f"non-finite quality score for image {image_id!r}"
                )
            scores.append((image_id, value))
    out = Path(job.outputs["paq2piq"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "score"])
        for image_id, value in scores:
            writer.writerow([image_id, repr(value)])
    meta = _base_metadata(job, runner.network, runner.weights_hash)
    meta.update(
        {
            "format": "quality-scores",
            "extractor": "paq2piq",
            "head": "linear(512 -> 1)",
            "network_input": networks.QUALITY_INPUT,
        }
    )
    Path(str(out) + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n"
    )
    _check_ids([i for i, _ in scores], [i for i, _ in entries], out)
    return out


def run_export(job: ExportJob) -> dict[str, Path]:
    """Run every extractor the job requests; extractor-name -> path."""
    written: dict[str, Path] = {}
    if any(k in networks.BACKBONES for k in job.extractors):
        written.update(export_activations(job))
    if "inception" in job.extractors:
        written["inception"] = export_inception(job)
    if "paq2piq" in job.extractors:
        written["paq2piq"] = export_paq2piq(job)
    return written
