"""Reference-based quality scores: MSE, PSNR, SSIM, VIF, and LPIPS.

All functions are pure and operate on :class:`~ctiqa.image.ImageGrid`
inputs (LPIPS works on externally produced activation stacks instead).
Computation happens in float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._filters import filter_valid, gaussian_kernel1d
from .errors import DegenerateInputError, DomainError, ShapeError
from .image import Domain, ImageGrid

_EPS = 1e-10


def _check_pair(a: ImageGrid, b: ImageGrid) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"image dimensions differ: {a.shape} vs {b.shape}")
    if a.domain is not b.domain:
        raise DomainError(
            f"intensity domains differ: {a.domain.name} vs {b.domain.name}"
        )


def mse(a: ImageGrid, b: ImageGrid) -> float:
    """Mean squared per-pixel difference."""
    _check_pair(a, b)
    diff = a.values64() - b.values64()
    return float(np.mean(diff * diff))


def psnr(a: ImageGrid, b: ImageGrid, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB: 10·log10(peak² / mse).

    ``peak`` defaults to the [-1, 1] dynamic range.  Pass the maximum of
    the test image to reproduce the per-image-peak convention instead.
    Identical images give +inf rather than raising.
    """
    if not (peak > 0):
        raise DomainError(f"peak must be positive, got {peak}")
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / err))


@dataclass(frozen=True)
class SsimParams:
    """Stabilizers and window shape for SSIM.

    Defaults assume a dynamic range of 2 ([-1, 1] pixels) with the usual
    k1 = 0.01, k2 = 0.03 constants and an 11x11 Gaussian window.
    """

    c1: float = (0.01 * 2.0) ** 2
    c2: float = (0.03 * 2.0) ** 2
    window_radius: int = 5
    window_sigma: float = 1.5
    dynamic_range: float = 2.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise DomainError("SSIM stabilizers c1 and c2 must be positive")
        if self.window_radius < 0:
            raise DomainError("window radius must be non-negative")
        if not (self.window_sigma > 0):
            raise DomainError("window sigma must be positive")

    @classmethod
    def from_constants(cls, k1: float = 0.01, k2: float = 0.03,
                       dynamic_range: float = 2.0, window_radius: int = 5,
                       window_sigma: float = 1.5) -> "SsimParams":
        return cls((k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2,
                   window_radius, window_sigma, dynamic_range)


def ssim(a: ImageGrid, b: ImageGrid, params: SsimParams | None = None) -> float:
    """Mean structural similarity over sliding Gaussian windows.

    Local means, variances and covariance are taken under a Gaussian
    window (valid positions only, no padding); the local scores

        ((2·μa·μb + c1)(2·σab + c2)) / ((μa² + μb² + c1)(σa² + σb² + c2))

    are averaged into a single scalar in [-1, 1].
    """
    if params is None:
        params = SsimParams()
    _check_pair(a, b)
    side = 2 * params.window_radius + 1
    if a.height < side or a.width < side:
        raise ShapeError(
            f"SSIM window {side}x{side} larger than image {a.width}x{a.height}"
        )
    kern = gaussian_kernel1d(params.window_radius, params.window_sigma)
    x = a.values64()
    y = b.values64()
    mu_x = filter_valid(x, kern)
    mu_y = filter_valid(y, kern)
    sig_xx = filter_valid(x * x, kern) - mu_x * mu_x
    sig_yy = filter_valid(y * y, kern) - mu_y * mu_y
    sig_xy = filter_valid(x * y, kern) - mu_x * mu_y
    c1, c2 = params.c1, params.c2
    score = ((2.0 * mu_x * mu_y + c1) * (2.0 * sig_xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (sig_xx + sig_yy + c2)
    )
    return float(np.mean(score))


def _to_255(img: ImageGrid) -> np.ndarray:
    """Working copy rescaled to the conventional [0, 255] grey range."""
    if img.domain is Domain.NORMALIZED:
        return (img.values64() + 1.0) * 127.5
    return img.values64()


def vif(reference: ImageGrid, test: ImageGrid, n_scales: int = 4,
        noise_var: float = 2.0) -> float:
    """Pixel-domain visual information fidelity (multi-scale).

    Uses a Gaussian pyramid with window sizes 2^(n_scales-s+1)+1 at scale
    s and the scalar Gaussian-scale-mixture information terms; the score
    is the ratio of total information in the test channel to total
    information in the reference channel.  ``noise_var`` is calibrated
    for an effective [0, 255] grey range (normalized inputs are rescaled
    internally).

    Raises:
        DegenerateInputError: all-constant reference (no information).
        ShapeError: images too small for the requested scale count.
    """
    _check_pair(reference, test)
    if n_scales < 1:
        raise DomainError(f"n_scales must be at least 1, got {n_scales}")
    if not (noise_var > 0):
        raise DomainError("noise_var must be positive")
    ref = _to_255(reference)
    dist = _to_255(test)
    num = 0.0
    den = 0.0
    for scale in range(1, n_scales + 1):
        side = 2 ** (n_scales - scale + 1) + 1
        kern = gaussian_kernel1d(side // 2, side / 5.0)
        if scale > 1:
            if min(ref.shape) < side:
                raise ShapeError(
                    f"image too small for {n_scales} scales (scale {scale})"
                )
            ref = filter_valid(ref, kern)[::2, ::2]
            dist = filter_valid(dist, kern)[::2, ::2]
        if min(ref.shape) < side:
            raise ShapeError(f"image too small for {n_scales} scales (scale {scale})")
        mu1 = filter_valid(ref, kern)
        mu2 = filter_valid(dist, kern)
        sigma1_sq = filter_valid(ref * ref, kern) - mu1 * mu1
        sigma2_sq = filter_valid(dist * dist, kern) - mu2 * mu2
        sigma12 = filter_valid(ref * dist, kern) - mu1 * mu2

        g = sigma12 / (sigma1_sq + _EPS)
        sv_sq = sigma2_sq - g * sigma12

        low1 = sigma1_sq < _EPS
        g[low1] = 0.0
        sv_sq[low1] = sigma2_sq[low1]
        sigma1_sq = np.where(low1, 0.0, sigma1_sq)

        low2 = sigma2_sq < _EPS
        g[low2] = 0.0
        sv_sq[low2] = 0.0

        neg = g < 0.0
        sv_sq[neg] = sigma2_sq[neg]
        g[neg] = 0.0
        sv_sq[sv_sq <= _EPS] = _EPS

        num += float(np.sum(np.log10(1.0 + g * g * sigma1_sq / (sv_sq + noise_var))))
        den += float(np.sum(np.log10(1.0 + sigma1_sq / noise_var)))
    if den == 0.0:
        raise DegenerateInputError("all-constant reference carries no information")
    return num / den


@dataclass(frozen=True)
class ActivationLayer:
    """One convolutional feature map: (rows, cols, channels) float array."""

    name: str
    tensor: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.tensor, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(
                f"layer {self.name!r}: tensor must be rows x cols x channels, "
                f"got shape {arr.shape}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "tensor", arr)

    @property
    def rows(self) -> int:
        return self.tensor.shape[0]

    @property
    def cols(self) -> int:
        return self.tensor.shape[1]

    @property
    def channels(self) -> int:
        return self.tensor.shape[2]


@dataclass(frozen=True)
class ActivationStack:
    """Ordered feature maps for one image from one extractor network."""

    layers: tuple[ActivationLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ShapeError("activation stack must hold at least one layer")

    def __len__(self) -> int:
        return len(self.layers)


def lpips(a: ActivationStack, b: ActivationStack) -> float:
    """Unweighted perceptual distance between two activation stacks.

    Per layer: the mean squared difference over the whole feature tensor,
    divided once more by rows·cols; the per-layer terms are summed.

    Raises:
        ShapeError: stacks differ in layer count, names, or shapes.
    """
    if len(a) != len(b):
        raise ShapeError(f"layer counts differ: {len(a)} vs {len(b)}")
    total = 0.0
    for la, lb in zip(a.layers, b.layers):
        if la.name != lb.name:
            raise ShapeError(f"layer names differ: {la.name!r} vs {lb.name!r}")
        if la.tensor.shape != lb.tensor.shape:
            raise ShapeError(
                f"layer {la.name!r}: shapes differ "
                f"{la.tensor.shape} vs {lb.tensor.shape}"
            )
        diff = la.tensor - lb.tensor
        total += float(np.mean(diff * diff)) / (la.rows * la.cols)
    return total
