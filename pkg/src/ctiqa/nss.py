"""Natural-scene-statistics machinery shared by BRISQUE and NIQE.

Provides MSCN coefficients, moment-matching fits of the generalized
Gaussian distribution (GGD) and its asymmetric variant (AGGD), and the
36-dimensional NSS feature vectors: at each of two scales (original and
half-resolution), the GGD (alpha, sigma) of the MSCN field plus the
AGGD (alpha, eta, sigma_l, sigma_r) of its four directional pairwise
products (horizontal, vertical, and the two diagonals).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from ._filters import filter_same_nearest, gaussian_kernel1d
from .errors import (
    DegenerateInputError,
    DomainError,
    InsufficientDataError,
    ShapeError,
)
from .image import Domain, ImageGrid

NSS_FEATURE_COUNT = 36

# Shape-parameter search grid: 0.05 .. 10.0 in steps of 0.001.
ALPHA_GRID = np.linspace(0.05, 10.0, 9951)

# Moment ratios precomputed once and shared read-only:
# GGD:  r(a) = G(1/a)G(3/a)/G(2/a)^2, matched against E[x^2]/E[|x|]^2.
# AGGD: rho(a) = G(2/a)^2/(G(1/a)G(3/a)), matched against the adjusted
# first-absolute-moment ratio.
_GGD_RATIO = (_gamma(1.0 / ALPHA_GRID) * _gamma(3.0 / ALPHA_GRID)
              / _gamma(2.0 / ALPHA_GRID) ** 2)
_AGGD_RATIO = 1.0 / _GGD_RATIO


@dataclass(frozen=True)
class GgdFit:
    """Generalized Gaussian parameters: shape alpha, scale sigma."""

    alpha: float
    sigma: float


@dataclass(frozen=True)
class AggdFit:
    """Asymmetric generalized Gaussian parameters.

    sigma_l and sigma_r are the left/right scale estimates; eta is the
    distribution's mean offset implied by the asymmetry.
    """

    alpha: float
    sigma_l: float
    sigma_r: float
    eta: float


def _as_values(img) -> np.ndarray:
    if isinstance(img, ImageGrid):
        return img.values64()
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D field, got shape {arr.shape}")
    return arr


def mscn_transform(
    img,
    radius: int = 3,
    sigma: float = 7.0 / 6.0,
    stabilizer: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MSCN coefficients plus the local mean and deviation maps.

    Computes (I - mu)/(sd + stabilizer) where mu and sd are the local
    Gaussian-weighted mean and standard deviation (nearest-edge padding,
    window side 2*radius+1).  Returns (mscn, sd, mu).
    """
    if radius < 1:
        raise DomainError(f"radius must be at least 1, got {radius}")
    if not (stabilizer > 0):
        raise DomainError(f"stabilizer must be positive, got {stabilizer}")
    vals = _as_values(img)
    kern = gaussian_kernel1d(radius, sigma)
    mu = filter_same_nearest(vals, kern)
    var = filter_same_nearest(vals * vals, kern) - mu * mu
    sd = np.sqrt(np.maximum(var, 0.0))
    return (vals - mu) / (sd + stabilizer), sd, mu


def mscn(img, sigma: float = 7.0 / 6.0, radius: int = 3,
         stabilizer: float = 1.0) -> np.ndarray:
    """MSCN coefficient field of an image (see :func:`mscn_transform`)."""
    return mscn_transform(img, radius=radius, sigma=sigma,
                          stabilizer=stabilizer)[0]


def fit_ggd(samples) -> GgdFit:
    """Moment-matching GGD fit over the shared alpha grid.

    Matches the ratio E[x^2]/E[|x|]^2 against r(alpha); sigma is the
    root second moment.

    Raises:
        InsufficientDataError: fewer than 2 samples.
        DegenerateInputError: zero-variance input.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("samples must be finite")
    if float(np.var(x)) == 0.0:
        raise DegenerateInputError("zero-variance input")
    m2 = float(np.mean(x * x))
    m1 = float(np.mean(np.abs(x)))
    ratio = m2 / (m1 * m1)
    idx = int(np.argmin(np.abs(_GGD_RATIO - ratio)))
    return GgdFit(alpha=float(ALPHA_GRID[idx]), sigma=float(np.sqrt(m2)))


def fit_aggd(samples) -> AggdFit:
    """Moment-matching AGGD fit (left/right second moments).

    Strictly negative samples feed the left scale, strictly positive the
    right; zeros contribute only to the overall moments, which keeps the
    estimator exactly symmetric under negation.

    Raises:
        InsufficientDataError: fewer than 2 samples.
        DegenerateInputError: one-sided sample sets.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("samples must be finite")
    neg = x[x < 0.0]
    pos = x[x > 0.0]
    if neg.size == 0 or pos.size == 0:
        raise DegenerateInputError("one-sided samples: need both signs present")
    sigma_l = float(np.sqrt(np.mean(neg * neg)))
    sigma_r = float(np.sqrt(np.mean(pos * pos)))
    gam = sigma_l / sigma_r
    rhat = float(np.mean(np.abs(x))) ** 2 / float(np.mean(x * x))
    rhat_adj = rhat * (gam**3 + 1.0) * (gam + 1.0) / (gam**2 + 1.0) ** 2
    idx = int(np.argmin((_AGGD_RATIO - rhat_adj) ** 2))
    alpha = float(ALPHA_GRID[idx])
    g1 = _gamma(1.0 / alpha)
    g2 = _gamma(2.0 / alpha)
    g3 = _gamma(3.0 / alpha)
    eta = (sigma_r - sigma_l) * (g2 / g1) * float(np.sqrt(g1 / g3))
    return AggdFit(alpha=alpha, sigma_l=sigma_l, sigma_r=sigma_r, eta=eta)


def _halve(vals: np.ndarray) -> np.ndarray:
    """Half-resolution copy by 2x2 block averaging (odd edges trimmed)."""
    h2 = (vals.shape[0] // 2) * 2
    w2 = (vals.shape[1] // 2) * 2
    v = vals[:h2, :w2]
    return (v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2]) / 4.0


def _paired_products(m: np.ndarray) -> tuple[np.ndarray, ...]:
    """Directional neighbor products of an MSCN field: H, V, D1, D2."""
    return (
        m[:, :-1] * m[:, 1:],
        m[:-1, :] * m[1:, :],
        m[:-1, :-1] * m[1:, 1:],
        m[:-1, 1:] * m[1:, :-1],
    )


def _scale_features(mscn_field: np.ndarray) -> list[float]:
    """The 18 per-scale NSS features of one MSCN field."""
    g = fit_ggd(mscn_field)
    feats = [g.alpha, g.sigma]
    for prod in _paired_products(mscn_field):
        a = fit_aggd(prod)
        feats.extend((a.alpha, a.eta, a.sigma_l, a.sigma_r))
    return feats


def _to_grey255(img: ImageGrid) -> np.ndarray:
    if img.domain is not Domain.NORMALIZED:
        raise DomainError("NSS features expect a normalized image")
    return (img.values64() + 1.0) * 127.5


def brisque_features(img: ImageGrid) -> np.ndarray:
    """The 36-dim NSS feature vector of a whole image.

    Computed on a [0, 255] grey rescale at two scales (original and 2x
    block-averaged), 18 features each; see the module docstring for the
    layout.

    Raises:
        ShapeError: image smaller than 16x16.
        DegenerateInputError: feature fits impossible (constant or
            pathologically one-sided statistics).
    """
    if img.height < 16 or img.width < 16:
        raise ShapeError(
            f"image must be at least 16x16, got {img.width}x{img.height}"
        )
    vals = _to_grey255(img)
    feats: list[float] = []
    for scale in range(2):
        if scale == 1:
            vals = _halve(vals)
        field, _, _ = mscn_transform(vals)
        feats.extend(_scale_features(field))
    out = np.array(feats, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise DegenerateInputError("non-finite NSS features")
    return out


def niqe_patch_features(
    img: ImageGrid,
    patch: int = 96,
    sharpness_fraction: float = 0.75,
) -> list[np.ndarray]:
    """Per-patch 36-dim NSS vectors for the sharpest image patches.

    The image splits into non-overlapping ``patch`` x ``patch`` tiles;
    tiles whose mean local deviation reaches ``sharpness_fraction`` of
    the maximum tile sharpness are kept.  Second-scale features come
    from the half-resolution image at the aligned half-size tile.

    Raises:
        ShapeError: patch does not fit, or is odd (the second scale
            needs an exact half).
        DomainError: sharpness_fraction outside (0, 1].
    """
    if patch < 2 or patch % 2 != 0:
        raise ShapeError(f"patch must be an even size >= 2, got {patch}")
    if patch > img.height or patch > img.width:
        raise ShapeError(
            f"patch {patch} exceeds image dimensions {img.width}x{img.height}"
        )
    if not (0.0 < sharpness_fraction <= 1.0):
        raise DomainError(
            f"sharpness_fraction must be in (0, 1], got {sharpness_fraction}"
        )
    vals = _to_grey255(img)
    field1, sd1, _ = mscn_transform(vals)
    field2, _, _ = mscn_transform(_halve(vals))
    n_rows = img.height // patch
    n_cols = img.width // patch
    half = patch // 2
    tiles = []
    for r in range(n_rows):
        for c in range(n_cols):
            y, x = r * patch, c * patch
            sharp = float(np.mean(sd1[y : y + patch, x : x + patch]))
            tiles.append((y, x, sharp))
    max_sharp = max(t[2] for t in tiles)
    threshold = sharpness_fraction * max_sharp
    out: list[np.ndarray] = []
    for y, x, sharp in tiles:
        if sharp < threshold:
            continue
        f1 = _scale_features(field1[y : y + patch, x : x + patch])
        f2 = _scale_features(field2[y // 2 : y // 2 + half,
                                    x // 2 : x // 2 + half])
        vec = np.array(f1 + f2, dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            raise DegenerateInputError("non-finite NSS features in a patch")
        out.append(vec)
    if not out:
        raise DegenerateInputError("no patch survives sharpness selection")
    return out
