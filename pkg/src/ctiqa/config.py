"""Run configuration: defaults, JSON schema, and the config digest.

One flat dataclass backs a nested, human-readable JSON document.  The
digest of the canonical serialization is stamped into every output so
results remain traceable to the exact settings that produced them.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import DomainError, FileFormatError


@dataclass(frozen=True)
class Config:
    # CT display window (HU) and preprocessing chain
    window_center: float = -500.0
    window_width: float = 1400.0
    preprocess_order: tuple[str, ...] = ("window", "resize")
    resize_width: int = 256
    resize_height: int = 256
    # patch grid feeding the distribution metrics
    patch_size: int = 50
    patch_stride: int = 25
    # SSIM
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    ssim_window_radius: int = 5
    ssim_window_sigma: float = 1.5
    ssim_dynamic_range: float = 2.0
    # PSNR: fixed peak, or the test image's own maximum
    psnr_peak: float = 2.0
    psnr_peak_from_image: bool = False
    # VIF
    vif_scales: int = 4
    vif_noise_var: float = 2.0
    # MSCN / NSS
    mscn_radius: int = 3
    mscn_sigma: float = 7.0 / 6.0
    mscn_stabilizer: float = 1.0
    # NIQE patching
    niqe_patch: int = 96
    niqe_sharpness_fraction: float = 0.75
    # RAPS
    raps_bins: int = 64
    raps_log_power: bool = True
    # KID
    kid_subset_size: int = 100
    kid_subsets: int = 10
    # SNR mask heuristics
    snr_tissue_threshold: float = -0.3
    snr_corner: int = 16
    # regression tree
    tree_max_depth: int | None = 8
    tree_min_samples_leaf: int = 5
    tree_min_impurity_decrease: float = 0.0
    # correlation strength bins and cross-validation
    strength_edges: tuple[float, float, float] = (0.3, 0.6, 0.8)
    cv_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        order = tuple(self.preprocess_order)
        if sorted(order) != ["resize", "window"]:
            raise DomainError(
                f"preprocess order must list 'window' and 'resize' once each, "
                f"got {order}"
            )
        object.__setattr__(self, "preprocess_order", order)
        object.__setattr__(self, "strength_edges", tuple(self.strength_edges))
        if self.resize_width < 1 or self.resize_height < 1:
            raise DomainError("resize target must be at least 1x1")
        if self.patch_size < 1 or self.patch_stride < 1:
            raise DomainError("patch size and stride must be positive")

    def to_dict(self) -> dict:
        return {
            "window": {"center": self.window_center, "width": self.window_width},
            "preprocess": {
                "order": list(self.preprocess_order),
                "resize": [self.resize_width, self.resize_height],
            },
            "patches": {"size": self.patch_size, "stride": self.patch_stride},
            "ssim": {
                "k1": self.ssim_k1,
                "k2": self.ssim_k2,
                "window_radius": self.ssim_window_radius,
                "window_sigma": self.ssim_window_sigma,
                "dynamic_range": self.ssim_dynamic_range,
            },
            "psnr": {"peak": self.psnr_peak,
                     "peak_from_image": self.psnr_peak_from_image},
            "vif": {"n_scales": self.vif_scales, "noise_var": self.vif_noise_var},
            "nss": {
                "mscn_radius": self.mscn_radius,
                "mscn_sigma": self.mscn_sigma,
                "stabilizer": self.mscn_stabilizer,
            },
            "niqe": {"patch": self.niqe_patch,
                     "sharpness_fraction": self.niqe_sharpness_fraction},
            "raps": {"n_bins": self.raps_bins, "log_power": self.raps_log_power},
            "kid": {"subset_size": self.kid_subset_size,
                    "n_subsets": self.kid_subsets},
            "snr": {"tissue_threshold": self.snr_tissue_threshold,
                    "corner": self.snr_corner},
            "tree": {
                "max_depth": self.tree_max_depth,
                "min_samples_leaf": self.tree_min_samples_leaf,
                "min_impurity_decrease": self.tree_min_impurity_decrease,
            },
            "strength_edges": list(self.strength_edges),
            "cv": {"folds": self.cv_folds},
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_SECTION_FIELDS = {
    "window": {"center": "window_center", "width": "window_width"},
    "patches": {"size": "patch_size", "stride": "patch_stride"},
    "ssim": {
        "k1": "ssim_k1",
        "k2": "ssim_k2",
        "window_radius": "ssim_window_radius",
        "window_sigma": "ssim_window_sigma",
        "dynamic_range": "ssim_dynamic_range",
    },
    "psnr": {"peak": "psnr_peak", "peak_from_image": "psnr_peak_from_image"},
    "vif": {"n_scales": "vif_scales", "noise_var": "vif_noise_var"},
    "nss": {
        "mscn_radius": "mscn_radius",
        "mscn_sigma": "mscn_sigma",
        "stabilizer": "mscn_stabilizer",
    },
    "niqe": {"patch": "niqe_patch",
             "sharpness_fraction": "niqe_sharpness_fraction"},
    "raps": {"n_bins": "raps_bins", "log_power": "raps_log_power"},
    "kid": {"subset_size": "kid_subset_size", "n_subsets": "kid_subsets"},
    "snr": {"tissue_threshold": "snr_tissue_threshold", "corner": "snr_corner"},
    "tree": {
        "max_depth": "tree_max_depth",
        "min_samples_leaf": "tree_min_samples_leaf",
        "min_impurity_decrease": "tree_min_impurity_decrease",
    },
    "cv": {"folds": "cv_folds"},
}


def config_from_dict(data: dict) -> Config:
    """Build a Config from the nested JSON schema, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise FileFormatError("config root must be a JSON object")
    kwargs: dict = {}
    for section, value in data.items():
        if section == "preprocess":
            known = {"order", "resize"}
            extra = set(value) - known
            if extra:
                raise FileFormatError(f"unknown preprocess keys: {sorted(extra)}")
            if "order" in value:
                kwargs["preprocess_order"] = tuple(value["order"])
            if "resize" in value:
                kwargs["resize_width"] = int(value["resize"][0])
                kwargs["resize_height"] = int(value["resize"][1])
        elif section == "strength_edges":
            kwargs["strength_edges"] = tuple(float(v) for v in value)
        elif section == "seed":
            kwargs["seed"] = int(value)
        elif section in _SECTION_FIELDS:
            mapping = _SECTION_FIELDS[section]
            extra = set(value) - set(mapping)
            if extra:
                raise FileFormatError(
                    f"unknown keys in config section {section!r}: {sorted(extra)}"
                )
            for key, val in value.items():
                kwargs[mapping[key]] = val
        else:
            raise FileFormatError(f"unknown config section {section!r}")
    try:
        return Config(**kwargs)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"invalid config: {exc}") from None


def load_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    return config_from_dict(data)


def override(cfg: Config, **kwargs) -> Config:
    """Functional update, dropping None values (unset CLI flags)."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    bad = set(updates) - {f.name for f in fields(Config)}
    if bad:
        raise DomainError(f"unknown config fields: {sorted(bad)}")
    return replace(cfg, **updates)
