"""Corpus scoring: run selected metrics over a manifest into a table.

Paired metrics read the denoised and reference rasters; unpaired
metrics never touch the reference image.  Distribution metrics and
LPIPS consume embedding files produced offline; BRISQUE/NIQE load their
model files once and share them read-only.  Per-image failures mask the
affected cell with a reason instead of aborting the run.
"""
from __future__ import annotations

import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from . import nss, paired, unpaired
from .config import Config
from .correlation import (
    DEFAULT_METRIC_CLASSES,
    MetricInfo,
    MetricTable,
    metric_class_of,
)
from .embedding_io import load_activation_stacks, read_embeddings
from .errors import (
    DegenerateInputError,
    DomainError,
    FileFormatError,
    InsufficientDataError,
    ToolkitError,
)
from .image import Domain, ImageGrid, WindowSpec, load_image, preprocess
from .manifest import CorpusManifest, ManifestEntry

METRIC_ORDER = tuple(DEFAULT_METRIC_CLASSES)
PAIRED_METRICS = tuple(
    m for m in METRIC_ORDER
    if metric_class_of(m).value in ("pixel", "perceptual")
)
UNPAIRED_METRICS = tuple(m for m in METRIC_ORDER if m not in PAIRED_METRICS)

# manifest resources each metric needs before scoring can start
_RESOURCE_KEYS = {
    "LPIPS1": ("embeddings", ("lpips1_denoised", "lpips1_reference")),
    "LPIPS2": ("embeddings", ("lpips2_denoised", "lpips2_reference")),
    "LPIPS3": ("embeddings", ("lpips3_denoised", "lpips3_reference")),
    "FID": ("embeddings", ("inception_denoised", "inception_reference_pool")),
    "KID": ("embeddings", ("inception_denoised", "inception_reference_pool")),
    "IS": ("embeddings", ("inception_softmax",)),
    "BRISQUE": ("models", ("brisque_svr",)),
    "NIQE": ("models", ("niqe_mvg",)),
    "PaQ-2-PiQ": ("external_scores", ("paq2piq",)),
}


def select_metrics(spec: str | list[str] | tuple[str, ...] | None) -> tuple[str, ...]:
    """Resolve a metric selection: 'all', 'paired', 'unpaired', or names."""
    if spec is None or spec == "all":
        return METRIC_ORDER
    if spec == "paired":
        return PAIRED_METRICS
    if spec == "unpaired":
        return UNPAIRED_METRICS
    if isinstance(spec, str):
        names = [s.strip() for s in spec.split(",") if s.strip()]
    else:
        names = list(spec)
    if not names:
        raise DomainError("empty metric selection")
    for name in names:
        metric_class_of(name)
    if len(set(names)) != len(names):
        raise DomainError("duplicate metrics in selection")
    return tuple(names)


def _stable_offset(image_id: str) -> int:
    return zlib.crc32(image_id.encode("utf-8"))


class ScoreEngine:
    """Holds shared resources and evaluates metrics per manifest entry."""

    def __init__(
        self,
        manifest: CorpusManifest,
        config: Config | None = None,
        metrics=None,
        loader: Callable[..., ImageGrid] | None = None,
    ):
        self.manifest = manifest
        self.cfg = config or Config()
        self.metrics = select_metrics(metrics)
        self.loader = loader or load_image
        self._window = WindowSpec(self.cfg.window_center, self.cfg.window_width)
        self._prepare_resources()

    # -- resource loading --------------------------------------------------

    def _require(self, metric: str) -> None:
        section, keys = _RESOURCE_KEYS[metric]
        table = getattr(self.manifest, section)
        for key in keys:
            if key not in table:
                raise FileFormatError(
                    f"metric {metric} needs manifest {section} entry {key!r}"
                )

    def _prepare_resources(self) -> None:
        cfg = self.cfg
        man = self.manifest
        for metric in self.metrics:
            if metric in _RESOURCE_KEYS:
                self._require(metric)
        self.lpips_stacks: dict[str, tuple[dict, dict]] = {}
        for metric in ("LPIPS1", "LPIPS2", "LPIPS3"):
            if metric in self.metrics:
                key = metric.lower()
                dn, _ = load_activation_stacks(man.embeddings[f"{key}_denoised"])
                ref, _ = load_activation_stacks(man.embeddings[f"{key}_reference"])
                self.lpips_stacks[metric] = (dn, ref)
        self.patch_embeddings: dict[str, np.ndarray] = {}
        self.ref_pool: np.ndarray | None = None
        self.ref_stats: unpaired.GaussianStats | None = None
        if "FID" in self.metrics or "KID" in self.metrics:
            parsed = read_embeddings(man.embeddings["inception_denoised"])
            for image_id in parsed.image_ids():
                tensors = parsed.tensors_of(image_id)
                if "pool" not in tensors:
                    raise FileFormatError(
                        f"image {image_id!r} lacks a 'pool' tensor in "
                        "inception_denoised"
                    )
                self.patch_embeddings[image_id] = np.asarray(
                    tensors["pool"], dtype=np.float64
                )
            ref = read_embeddings(man.embeddings["inception_reference_pool"])
            self.ref_pool = ref.pooled("pool")
            if "FID" in self.metrics:
                self.ref_stats = unpaired.gaussian_stats(self.ref_pool)
        self.softmax_rows: dict[str, np.ndarray] = {}
        if "IS" in self.metrics:
            parsed = read_embeddings(man.embeddings["inception_softmax"])
            for image_id in parsed.image_ids():
                tensors = parsed.tensors_of(image_id)
                if "softmax" not in tensors:
                    raise FileFormatError(
                        f"image {image_id!r} lacks a 'softmax' tensor in "
                        "inception_softmax"
                    )
                self.softmax_rows[image_id] = np.asarray(
                    tensors["softmax"], dtype=np.float64
                )
        self.svr = (
            unpaired.load_svr_model(man.models["brisque_svr"])
            if "BRISQUE" in self.metrics else None
        )
        self.mvg = (
            unpaired.load_mvg_model(man.models["niqe_mvg"])
            if "NIQE" in self.metrics else None
        )
        self.paq_scores = (
            unpaired.read_external_scores(man.external_scores["paq2piq"])
            if "PaQ-2-PiQ" in self.metrics else None
        )
        self.ssim_params = paired.SsimParams.from_constants(
            cfg.ssim_k1, cfg.ssim_k2, cfg.ssim_dynamic_range,
            cfg.ssim_window_radius, cfg.ssim_window_sigma,
        )

    # -- per-entry evaluation ----------------------------------------------

    def _image(self, entry: ManifestEntry, role: str, cache: dict) -> ImageGrid:
        if role in cache:
            return cache[role]
        path = getattr(entry, role)
        if path is None:
            raise DegenerateInputError(f"entry has no {role} image")
        grid = self.loader(path)
        if grid.domain is Domain.HU:
            grid = preprocess(
                grid,
                window=self._window,
                size=(self.cfg.resize_width, self.cfg.resize_height),
                resize_first=self.cfg.preprocess_order[0] == "resize",
            )
        cache[role] = grid
        return grid

    def _stack_pair(self, metric: str, image_id: str):
        dn, ref = self.lpips_stacks[metric]
        if image_id not in dn:
            raise DomainError(f"no denoised activations for {image_id!r}")
        if image_id not in ref:
            raise DomainError(f"no reference activations for {image_id!r}")
        return dn[image_id], ref[image_id]

    def metric_value(self, metric: str, entry: ManifestEntry,
                     cache: dict | None = None) -> float:
        """One metric on one entry; raises ToolkitError when unscorable."""
        if cache is None:
            cache = {}
        cfg = self.cfg

        def img(role: str) -> ImageGrid:
            return self._image(entry, role, cache)

        if metric == "MSE":
            return paired.mse(img("denoised"), img("reference"))
        if metric == "PSNR":
            if cfg.psnr_peak_from_image:
                peak = float(np.max(img("denoised").pixels))
                if peak <= 0.0:
                    raise DegenerateInputError(
                        "test image maximum is not positive; cannot use "
                        "per-image peak"
                    )
            else:
                peak = cfg.psnr_peak
            return paired.psnr(img("denoised"), img("reference"), peak)
        if metric == "SSIM":
            return paired.ssim(img("denoised"), img("reference"), self.ssim_params)
        if metric == "VIF":
            return paired.vif(img("reference"), img("denoised"),
                              cfg.vif_scales, cfg.vif_noise_var)
        if metric in ("LPIPS1", "LPIPS2", "LPIPS3"):
            a, b = self._stack_pair(metric, entry.image_id)
            return paired.lpips(a, b)
        if metric == "FID":
            pats = self.patch_embeddings.get(entry.image_id)
            if pats is None:
                raise DomainError(f"no patch embeddings for {entry.image_id!r}")
            return unpaired.fid(unpaired.gaussian_stats(pats), self.ref_stats)
        if metric == "KID":
            pats = self.patch_embeddings.get(entry.image_id)
            if pats is None:
                raise DomainError(f"no patch embeddings for {entry.image_id!r}")
            subset = min(cfg.kid_subset_size, pats.shape[0],
                         self.ref_pool.shape[0])
            if subset < 2:
                raise InsufficientDataError(
                    "too few embeddings for a KID subset"
                )
            mean, _ = unpaired.kid(
                pats, self.ref_pool, subset_size=subset,
                n_subsets=cfg.kid_subsets,
                seed=cfg.seed ^ _stable_offset(entry.image_id),
            )
            return mean
        if metric == "IS":
            rows = self.softmax_rows.get(entry.image_id)
            if rows is None:
                raise DomainError(f"no softmax rows for {entry.image_id!r}")
            return unpaired.inception_score(rows)
        if metric == "SNR":
            dn = img("denoised")
            tissue, air = self._snr_masks(entry, dn, cache)
            return unpaired.snr(dn, tissue, air)
        if metric == "BRISQUE":
            return unpaired.brisque_score(
                nss.brisque_features(img("denoised")), self.svr
            )
        if metric == "RAPS-FD":
            return unpaired.raps_fd(img("low_dose"), img("denoised"),
                                    cfg.raps_bins, cfg.raps_log_power)
        if metric == "PaQ-2-PiQ":
            try:
                return self.paq_scores[entry.image_id]
            except KeyError:
                raise DomainError(
                    f"no external score for {entry.image_id!r}"
                ) from None
        if metric == "NIQE":
            feats = nss.niqe_patch_features(
                img("denoised"), cfg.niqe_patch, cfg.niqe_sharpness_fraction
            )
            return unpaired.niqe_score(feats, self.mvg)
        raise DomainError(f"unknown metric {metric!r}")

    def _snr_masks(self, entry: ManifestEntry, dn: ImageGrid, cache: dict):
        if entry.tissue_mask is not None:
            tissue = self.loader(entry.tissue_mask).pixels > 0.5
        else:
            tissue = unpaired.derive_tissue_mask(dn, self.cfg.snr_tissue_threshold)
        if entry.air_mask is not None:
            air = self.loader(entry.air_mask).pixels > 0.5
        else:
            air = unpaired.corner_air_mask(dn, self.cfg.snr_corner)
        air = air & ~tissue
        return tissue, air

    def score_entry(self, entry: ManifestEntry) -> dict:
        cache: dict = {}
        out: dict = {}
        for metric in self.metrics:
            try:
                out[metric] = float(self.metric_value(metric, entry, cache))
            except (ToolkitError, OSError) as exc:
                out[metric] = (None, f"{type(exc).__name__}: {exc}")
        return out

    def run(self, jobs: int = 1) -> MetricTable:
        """Score every manifest entry; rows sorted by image id."""
        entries = sorted(self.manifest.entries, key=lambda e: e.image_id)
        infos = [MetricInfo(m, metric_class_of(m)) for m in self.metrics]
        if not entries:
            warnings.warn("empty manifest: producing an empty table",
                          stacklevel=2)
            return MetricTable(
                [], infos, np.zeros((0, len(infos))),
                np.zeros((0, len(infos)), dtype=bool),
            )
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(self.score_entry, entries))
        else:
            results = [self.score_entry(e) for e in entries]
        n, m = len(entries), len(self.metrics)
        values = np.full((n, m), np.nan)
        missing = np.ones((n, m), dtype=bool)
        reasons: dict[tuple[str, str], str] = {}
        for i, (entry, result) in enumerate(zip(entries, results)):
            for j, metric in enumerate(self.metrics):
                cell = result[metric]
                if isinstance(cell, tuple):
                    reasons[(entry.image_id, metric)] = cell[1]
                else:
                    values[i, j] = cell
                    missing[i, j] = False
        patient_ids = None
        if any(e.patient_id for e in entries):
            patient_ids = [e.patient_id for e in entries]
        return MetricTable(
            [e.image_id for e in entries], infos, values, missing,
            reasons, patient_ids,
        )
