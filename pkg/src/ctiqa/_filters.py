"""Gaussian filtering helpers shared by the metric modules."""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def gaussian_kernel1d(radius: int, sigma: float) -> np.ndarray:
    """Sampled Gaussian of length 2*radius+1, normalized to unit sum."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def filter_same_nearest(values: np.ndarray, kernel1d: np.ndarray) -> np.ndarray:
    """Separable same-size correlation with nearest-edge padding."""
    tmp = ndimage.correlate1d(values, kernel1d, axis=0, mode="nearest")
    return ndimage.correlate1d(tmp, kernel1d, axis=1, mode="nearest")


def filter_valid(values: np.ndarray, kernel1d: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-covered output pixels.

    Output shape shrinks by the kernel radius on every side.
    """
    r = len(kernel1d) // 2
    if values.shape[0] < len(kernel1d) or values.shape[1] < len(kernel1d):
        raise ValueError(
            f"input {values.shape} smaller than kernel window {len(kernel1d)}"
        )
    tmp = ndimage.correlate1d(values, kernel1d, axis=0, mode="constant")
    tmp = ndimage.correlate1d(tmp, kernel1d, axis=1, mode="constant")
    return tmp[r : values.shape[0] - r, r : values.shape[1] - r]
