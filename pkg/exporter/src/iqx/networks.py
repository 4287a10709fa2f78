"""Network construction, weight provenance, and feature taps.

Backbones come from ``torchvision``.  This module pins three things
so exported files are reproducible and self-describing:

* **Tap points** — five convolutional stages per backbone (the layer
  set perceptual-distance pipelines conventionally tap), named and
  ordered by network depth.  A job may select a subset; the output
  always keeps depth order.
* **Input standardization** — grids arrive in [0, 1], are replicated
  to three identical channels, and are standardized with the
  ImageNet per-channel mean/std every backbone here was trained with.
* **Weights modes** — ``pretrained`` loads torchvision's published
  ImageNet weights (needs a local cache or download access);
  ``random:<seed>`` fills the architecture with a deterministic,
  variance-scaled random state that is reproducible across runs and
  machines for a fixed seed (useful offline and for plumbing tests);
  any other string is a filesystem path to a ``torch.save``-d state
  dict for the matching architecture.

Every loaded model is fingerprinted with SHA-256 over its state dict
(entry names, dtypes, shapes, and payload bytes, in registration
order).  The digest travels in output headers so a file can always be
traced to the exact weights that produced it.  All inference runs in
eval mode under ``torch.inference_mode()``; nothing here uses dropout
or autograd, so a fixed weights state yields bit-identical outputs.
"""
from __future__ import annotations

import hashlib
import math
import zlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torchvision import models as tvm

from .errors import InferenceError, JobError, WeightsError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
INCEPTION_INPUT = 299
QUALITY_INPUT = 224
POOL_LAYER = "avgpool"
POOL_DIM = 2048
N_CLASSES = 1000

# Fixed seed for the scalar regression head grafted onto a pretrained
# backbone, so the "pretrained" quality predictor is still
# deterministic across runs.
_HEAD_SEED = 0x51ED


@dataclass(frozen=True)
class TapPoint:
    """One capture point inside a backbone's feature stack."""

    name: str
    index: int
    channels: int


@dataclass(frozen=True)
class BackboneSpec:
    """An activation extractor: which network, tapped where."""

    key: str
    network: str
    taps: tuple[TapPoint, ...]


BACKBONES: dict[str, BackboneSpec] = {
    "lpips1": BackboneSpec(
        "lpips1",
        "vgg16",
        (
            TapPoint("relu1_2", 3, 64),
            TapPoint("relu2_2", 8, 128),
            TapPoint("relu3_3", 15, 256),
            TapPoint("relu4_3", 22, 512),
            TapPoint("relu5_3", 29, 512),
        ),
    ),
    "lpips2": BackboneSpec(
        "lpips2",
        "alexnet",
        (
            TapPoint("relu1", 1, 64),
            TapPoint("relu2", 4, 192),
            TapPoint("relu3", 7, 384),
            TapPoint("relu4", 9, 256),
            TapPoint("relu5", 11, 256),
        ),
    ),
    "lpips3": BackboneSpec(
        "lpips3",
        "squeezenet1_1",
        (
            TapPoint("relu1", 1, 64),
            TapPoint("fire3", 4, 128),
            TapPoint("fire5", 7, 256),
            TapPoint("fire7", 10, 384),
            TapPoint("fire9", 12, 512),
        ),
    ),
}


def available_layers(key: str) -> tuple[str, ...]:
    """Tap names one activation extractor offers, in depth order."""
    spec = BACKBONES.get(key)
    if spec is None:
        raise JobError(
            f"unknown activation extractor {key!r}; "
            f"available: {', '.join(sorted(BACKBONES))}"
        )
    return tuple(t.name for t in spec.taps)


def select_taps(key: str, layers=None) -> tuple[TapPoint, ...]:
    """Resolve a layer selection to tap points in depth order.

    ``None`` selects every tap.  Unknown or duplicate names raise
    JobError; the selection's own ordering is ignored in favor of
    network depth order (which is what the output records follow).
    """
    spec = BACKBONES.get(key)
    if spec is None:
        raise JobError(
            f"unknown activation extractor {key!r}; "
            f"available: {', '.join(sorted(BACKBONES))}"
        )
    if layers is None:
        return spec.taps
    wanted = tuple(layers)
    if not wanted:
        raise JobError(f"{key}: layer selection must not be empty")
    if len(set(wanted)) != len(wanted):
        raise JobError(f"{key}: duplicate layer names in {wanted}")
    known = {t.name for t in spec.taps}
    for name in wanted:
        if name not in known:
            raise JobError(
                f"{key} ({spec.network}) has no layer {name!r}; "
                f"available: {', '.join(t.name for t in spec.taps)}"
            )
    chosen = set(wanted)
    return tuple(t for t in spec.taps if t.name in chosen)


# ---------------------------------------------------------------------------
# Weights handling


def _parse_weights(weights: str):
    if not isinstance(weights, str) or not weights:
        raise WeightsError("weights mode must be a non-empty string")
    if weights == "pretrained":
        return "pretrained", None
    if weights.startswith("random:"):
        tail = weights[len("random:"):]
        try:
            return "random", int(tail)
        except ValueError:
            raise WeightsError(
                f"random weights need an integer seed, got {weights!r}"
            ) from None
    return "file", weights


def _quality_skeleton() -> nn.Module:
    model = tvm.resnet18(weights=None)
    model.fc = nn.Linear(model.fc.in_features, 1)
    return model


_SKELETONS = {
    "vgg16": lambda: tvm.vgg16(weights=None),
    "alexnet": lambda: tvm.alexnet(weights=None),
    "squeezenet1_1": lambda: tvm.squeezenet1_1(weights=None),
    "inception_v3": lambda: tvm.inception_v3(
        weights=None, aux_logits=False, init_weights=False,
        transform_input=False,
    ),
    "quality_resnet18": _quality_skeleton,
}


def _quality_pretrained() -> nn.Module:
    model = tvm.resnet18(weights=tvm.ResNet18_Weights.DEFAULT)
    model.fc = nn.Linear(model.fc.in_features, 1)
    model.fc.load_state_dict(_seeded_state(model.fc, _HEAD_SEED))
    return model


_PRETRAINED = {
    "vgg16": lambda: tvm.vgg16(weights=tvm.VGG16_Weights.DEFAULT),
    "alexnet": lambda: tvm.alexnet(weights=tvm.AlexNet_Weights.DEFAULT),
    "squeezenet1_1": lambda: tvm.squeezenet1_1(
        weights=tvm.SqueezeNet1_1_Weights.DEFAULT
    ),
    "inception_v3": lambda: tvm.inception_v3(
        weights=tvm.Inception_V3_Weights.DEFAULT
    ),
    "quality_resnet18": _quality_pretrained,
}


def _seeded_state(module: nn.Module, seed: int) -> dict:
    """A deterministic full state dict for one architecture.

    Weight matrices get zero-mean noise scaled by sqrt(2 / fan-in) so
    activations keep an order-one magnitude through deep stacks;
    normalization scales and running variances become ones; biases,
    running means, and counters become zeros.  Each tensor draws from
    its own generator seeded by (seed, tensor name), so the result
    does not depend on iteration order.
    """
    out: dict[str, torch.Tensor] = {}
    for name, tensor in module.state_dict().items():
        gen = torch.Generator()
        gen.manual_seed(
            (seed * 0x9E3779B1 + zlib.crc32(name.encode())) & 0x7FFFFFFFFFFFFFFF
        )
        if not torch.is_floating_point(tensor):
            out[name] = torch.zeros_like(tensor)
        elif tensor.ndim >= 2:
            fan_in = tensor[0].numel()
            std = math.sqrt(2.0 / max(fan_in, 1))
            out[name] = torch.randn(
                tensor.shape, generator=gen, dtype=tensor.dtype
            ) * std
        elif name.endswith("running_var") or (
            tensor.ndim == 1 and name.endswith(".weight")
        ):
            out[name] = torch.ones_like(tensor)
        else:
            out[name] = torch.zeros_like(tensor)
    return out


def weights_fingerprint(module: nn.Module) -> str:
    """SHA-256 over the state dict: names, dtypes, shapes, payloads."""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().contiguous().numpy()
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.dtype).encode("ascii"))
        digest.update(np.asarray(arr.shape, dtype="<i8").tobytes())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def load_network(network: str, weights: str) -> tuple[nn.Module, str]:
    """Build one architecture in the requested weights mode.

    Returns the model (eval mode, gradients off) and its weights
    fingerprint.

    Raises:
        WeightsError: unknown network, malformed mode string,
            unavailable pretrained weights, or a state dict that does
            not fit the architecture.
    """
    if network not in _SKELETONS:
        raise WeightsError(f"unknown network {network!r}")
    kind, arg = _parse_weights(weights)
    if kind == "pretrained":
        try:
            model = _PRETRAINED[network]()
        except Exception as exc:
            raise WeightsError(
                f"pretrained weights for {network} are not available "
                f"(no local cache and no download): {exc}"
            ) from None
    else:
        model = _SKELETONS[network]()
        if kind == "random":
            model.load_state_dict(_seeded_state(model, arg))
        else:
            try:
                state = torch.load(arg, map_location="cpu", weights_only=True)
            except FileNotFoundError:
                raise WeightsError(f"weights file not found: {arg}") from None
            except Exception as exc:
                raise WeightsError(
                    f"cannot load weights from {arg}: {exc}"
                ) from None
            if not isinstance(state, dict):
                raise WeightsError(
                    f"{arg} does not hold a state dict (got {type(state).__name__})"
                )
            try:
                model.load_state_dict(state)
            except RuntimeError as exc:
                raise WeightsError(
                    f"weights at {arg} do not fit {network}: {exc}"
                ) from None
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model, weights_fingerprint(model)


# ---------------------------------------------------------------------------
# Runners


class FeatureExtractor:
    """Runs one backbone's feature stack and captures tap activations."""

    def __init__(self, key: str, weights: str, layers=None, device: str = "cpu"):
        spec = BACKBONES.get(key)
        if spec is None:
            raise JobError(
                f"unknown activation extractor {key!r}; "
                f"available: {', '.join(sorted(BACKBONES))}"
            )
        self.key = key
        self.network = spec.network
        self.taps = select_taps(key, layers)
        model, self.weights_hash = load_network(spec.network, weights)
        self._device = torch.device(device)
        self._features = model.features.to(self._device)
        self._names = {t.index: t.name for t in self.taps}
        self._last = max(t.index for t in self.taps)

    def run(self, batch: torch.Tensor) -> dict[str, torch.Tensor]:
        """Tap name -> (N, C, H, W) activation for a standardized batch."""
        out: dict[str, torch.Tensor] = {}
        x = batch.to(self._device)
        try:
            with torch.inference_mode():
                for index, module in enumerate(self._features):
                    x = module(x)
                    name = self._names.get(index)
                    if name is not None:
                        out[name] = x.cpu()
                    if index == self._last:
                        break
        except RuntimeError as exc:
            raise InferenceError(
                f"{self.network} cannot process a "
                f"{tuple(batch.shape)} batch: {exc}"
            ) from None
        return out


class InceptionRunner:
    """Yields pooled feature vectors and class probabilities per input."""

    network = "inception_v3"

    def __init__(self, weights: str, device: str = "cpu"):
        model, self.weights_hash = load_network("inception_v3", weights)
        self._device = torch.device(device)
        self._model = model.to(self._device)
        self._captured: dict[str, torch.Tensor] = {}
        pool = getattr(self._model, POOL_LAYER)
        pool.register_forward_hook(self._capture)

    def _capture(self, module, inputs, output):
        self._captured["pool"] = output

    def run(self, batch: torch.Tensor) -> tuple[np.ndarray, np.ndarray]:
        """(pool (N, 2048) float32, probabilities (N, 1000) float64).

        Probabilities come from a float64 softmax over the logits, so
        each row sums to 1 well within float32 round-off even after
        the caller casts it down for storage.
        """
        x = batch.to(self._device)
        try:
            with torch.inference_mode():
                logits = self._model(x)
        except RuntimeError as exc:
            raise InferenceError(
                f"inception_v3 cannot process a "
                f"{tuple(batch.shape)} batch: {exc}"
            ) from None
        pool = self._captured.pop("pool").flatten(1).cpu().numpy()
        probs = torch.softmax(logits.to(torch.float64), dim=1).cpu().numpy()
        return pool.astype(np.float32, copy=False), probs


class QualityRunner:
    """Scalar blind-quality scores from a regression-headed ResNet-18."""

    network = "resnet18"

    def __init__(self, weights: str, device: str = "cpu"):
        model, self.weights_hash = load_network("quality_resnet18", weights)
        self._device = torch.device(device)
        self._model = model.to(self._device)

    def run(self, batch: torch.Tensor) -> np.ndarray:
        """(N,) float32 scores for a standardized batch."""
        x = batch.to(self._device)
        try:
            with torch.inference_mode():
                scores = self._model(x)
        except RuntimeError as exc:
            raise InferenceError(
                f"resnet18 quality head cannot process a "
                f"{tuple(batch.shape)} batch: {exc}"
            ) from None
        return scores.squeeze(1).cpu().numpy().astype(np.float32, copy=False)


# ---------------------------------------------------------------------------
# Input preparation


def replicate_channels(grids) -> torch.Tensor:
    """Stack [0, 1] grids into an (N, 3, H, W) batch of replicated channels."""
    arr = np.stack([np.asarray(g, dtype=np.float32) for g in grids])
    return torch.from_numpy(arr).unsqueeze(1).repeat(1, 3, 1, 1)


def standardize(batch: torch.Tensor) -> torch.Tensor:
    """Apply the ImageNet per-channel mean/std to an (N, 3, H, W) batch."""
    mean = torch.tensor(IMAGENET_MEAN, dtype=batch.dtype).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD, dtype=batch.dtype).view(1, 3, 1, 1)
    return (batch - mean) / std


def upscale(batch: torch.Tensor, side: int) -> torch.Tensor:
    """Bilinearly resample an (N, C, H, W) batch to ``side`` x ``side``."""
    if batch.shape[-2:] == (side, side):
        return batch
    return F.interpolate(
        batch, size=(side, side), mode="bilinear", align_corners=False
    )


def input_tensor(grids) -> torch.Tensor:
    """Replicate channels and standardize in one step."""
    return standardize(replicate_channels(grids))
