"""Quality scores that need no pixel-aligned reference.

Distribution-based: FID and KID over externally produced embedding sets,
and the inception score over class-probability rows.  No-reference: SNR
from tissue/air masks, BRISQUE scoring through a pretrained SVR, NIQE
scoring against a natural-corpus Gaussian model, the radially averaged
power-spectrum Fréchet distance (RAPS-FD), and ingestion of externally
computed per-image scores.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateInputError,
    DomainError,
    FileFormatError,
    InsufficientDataError,
    ShapeError,
)
from .image import ImageGrid


# ---------------------------------------------------------------------------
# Gaussian embedding statistics and FID


@dataclass(frozen=True)
class GaussianStats:
    """Sample mean and covariance of an embedding set."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        d = mean.shape[0]
        if d < 1:
            raise ShapeError("mean must have at least one dimension")
        if cov.shape != (d, d):
            raise ShapeError(f"cov shape {cov.shape} does not match dim {d}")
        if self.n < 2:
            raise InsufficientDataError(f"need n >= 2 samples, got {self.n}")
        if float(np.max(np.abs(cov - cov.T))) > 1e-9:
            raise ShapeError("covariance is not symmetric within 1e-9")
        mean = mean.copy()
        cov = cov.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(embeddings) -> GaussianStats:
    """Sample mean and unbiased covariance of a set of d-vectors."""
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(
            f"embeddings must form an n x d matrix, got shape {arr.shape}"
        )
    n = arr.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 embeddings, got {n}")
    mean = arr.mean(axis=0)
    cov = np.atleast_2d(np.cov(arr, rowvar=False))
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, cov=cov, n=n)


_EIG_FLOOR = -1e-6


def _clamped_eigs(sym: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with small negative eigenvalues clamped to 0."""
    vals, vecs = np.linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    if float(vals.min()) < _EIG_FLOOR * scale:
        raise DegenerateInputError(
            f"{what} is not positive semidefinite (min eigenvalue {vals.min()})"
        )
    return np.maximum(vals, 0.0), vecs


def _psd_sqrt(cov: np.ndarray, what: str) -> np.ndarray:
    vals, vecs = _clamped_eigs(cov, what)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussian embedding summaries.

    ||mean_a - mean_b||^2 + tr(C_a + C_b - 2 (C_a C_b)^(1/2)), with the
    cross square root taken through the symmetrized product
    C_a^(1/2) C_b C_a^(1/2).  Tiny negative values from rounding are
    clamped so the result is never below 0.
    """
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov, "covariance a")
    inner = root_a @ b.cov @ root_a
    inner = (inner + inner.T) / 2.0
    vals, _ = _clamped_eigs(inner, "cross-covariance product")
    tr_sqrt = float(np.sum(np.sqrt(vals)))
    value = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * tr_sqrt
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# KID


def _poly_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cubic polynomial kernel (u.v/d + 1)^3 between embedding rows."""
    d = a.shape[1]
    return (a @ b.T / d + 1.0) ** 3


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    m = x.shape[0]
    n = y.shape[0]
    k_xx = _poly_kernel(x, x)
    k_yy = _poly_kernel(y, y)
    k_xy = _poly_kernel(x, y)
    sum_xx = float(k_xx.sum() - np.trace(k_xx))
    sum_yy = float(k_yy.sum() - np.trace(k_yy))
    return (
        sum_xx / (m * (m - 1))
        + sum_yy / (n * (n - 1))
        - 2.0 * float(k_xy.mean())
    )


def kid(
    x,
    y,
    subset_size: int = 100,
    n_subsets: int = 10,
    seed: int = 0,
) -> tuple[float, float]:
    """Kernel inception distance: mean and spread of block MMD^2 estimates.

    Draws ``n_subsets`` random equal-size subsamples from each embedding
    set (without replacement, seeded) and evaluates the unbiased MMD^2
    with the cubic kernel (u.v/d + 1)^3 on each.  Returns the mean and
    the population standard deviation across subsets.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 2 or ya.ndim != 2:
        raise ShapeError("embedding sets must be n x d matrices")
    if xa.shape[1] != ya.shape[1]:
        raise ShapeError(
            f"embedding dims differ: {xa.shape[1]} vs {ya.shape[1]}"
        )
    if subset_size < 2:
        raise InsufficientDataError(f"subset_size must be >= 2, got {subset_size}")
    if xa.shape[0] < subset_size or ya.shape[0] < subset_size:
        raise InsufficientDataError(
            f"sets of {xa.shape[0]} and {ya.shape[0]} cannot supply "
            f"subsets of {subset_size}"
        )
    if n_subsets < 1:
        raise DomainError(f"n_subsets must be >= 1, got {n_subsets}")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_subsets):
        xi = xa[rng.choice(xa.shape[0], size=subset_size, replace=False)]
        yi = ya[rng.choice(ya.shape[0], size=subset_size, replace=False)]
        vals.append(_mmd2_unbiased(xi, yi))
    arr = np.array(vals)
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# Inception score


@dataclass(frozen=True)
class ProbMatrix:
    """Per-sample class probability rows."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(
                f"probability matrix must be samples x classes, got {arr.shape}"
            )
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DomainError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            raise DomainError(
                f"{int(bad.sum())} rows do not sum to 1 within 1e-6"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "rows", arr)

    @property
    def n_classes(self) -> int:
        return self.rows.shape[1]


def inception_score(p) -> float:
    """exp of the mean KL divergence between rows and their marginal.

    Rows are conditional class distributions; the marginal is the column
    mean.  KL terms use the 0·log 0 = 0 convention, and each row's KL is
    floored at 0 so rounding noise cannot push the score below 1.
    """
    if not isinstance(p, ProbMatrix):
        p = ProbMatrix(p)
    rows = p.rows
    marginal = rows.mean(axis=0)
    kls = []
    for row in rows:
        live = row > 0.0
        kl = float(np.sum(row[live] * (np.log(row[live]) - np.log(marginal[live]))))
        kls.append(max(kl, 0.0))
    return float(np.exp(np.mean(kls)))


# ---------------------------------------------------------------------------
# SNR


def snr(img: ImageGrid, tissue_mask: np.ndarray, air_mask: np.ndarray) -> float:
    """Mean tissue intensity over the air-region standard deviation.

    Uses the population standard deviation.  A perfectly quiet air
    region yields the +inf sentinel rather than raising.
    """
    tissue = np.asarray(tissue_mask, dtype=bool)
    air = np.asarray(air_mask, dtype=bool)
    if tissue.shape != img.shape or air.shape != img.shape:
        raise ShapeError("masks must match the image shape")
    if int(tissue.sum()) < 2 or int(air.sum()) < 2:
        raise DegenerateInputError("each mask must select at least 2 pixels")
    if bool(np.any(tissue & air)):
        raise DegenerateInputError("tissue and air masks overlap")
    vals = img.values64()
    noise = float(np.std(vals[air]))
    signal = float(np.mean(vals[tissue]))
    if noise == 0.0:
        return math.inf
    return signal / noise


def derive_tissue_mask(img: ImageGrid, threshold: float = -0.3) -> np.ndarray:
    """Heuristic tissue mask: above-threshold pixels, largest component."""
    raw = img.pixels > threshold
    if not raw.any():
        raise DegenerateInputError(
            f"no pixels above the tissue threshold {threshold}"
        )
    labels, count = ndimage.label(raw)
    if count == 1:
        return raw
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def corner_air_mask(img: ImageGrid, size: int = 16) -> np.ndarray:
    """Air mask from the four image corners (squares of the given side)."""
    s = max(1, min(size, img.height, img.width))
    mask = np.zeros(img.shape, dtype=bool)
    mask[:s, :s] = True
    mask[:s, -s:] = True
    mask[-s:, :s] = True
    mask[-s:, -s:] = True
    return mask


# ---------------------------------------------------------------------------
# BRISQUE scoring (pretrained SVR evaluation)


@dataclass(frozen=True)
class SvrModel:
    """RBF support-vector regressor with libsvm-style input scaling."""

    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    gamma: float
    bias: float
    feature_min: np.ndarray
    feature_max: np.ndarray
    score_range: tuple[float, float]

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        dual = np.asarray(self.dual_coeffs, dtype=np.float64).reshape(-1)
        fmin = np.asarray(self.feature_min, dtype=np.float64).reshape(-1)
        fmax = np.asarray(self.feature_max, dtype=np.float64).reshape(-1)
        if sv.ndim != 2 or sv.shape[0] < 1:
            raise ShapeError("support_vectors must be a k x d matrix, k >= 1")
        d = sv.shape[1]
        if dual.shape[0] != sv.shape[0]:
            raise ShapeError("dual_coeffs length must match support vector count")
        if fmin.shape[0] != d or fmax.shape[0] != d:
            raise ShapeError("feature_min/feature_max must match feature dim")
        if not np.all(fmax > fmin):
            raise DegenerateInputError("feature_max must exceed feature_min elementwise")
        if not (self.gamma > 0):
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        lo, hi = self.score_range
        if not (lo < hi):
            raise DomainError(f"score_range must be (lo, hi) with lo < hi")
        for name, arr in (("support_vectors", sv), ("dual_coeffs", dual),
                          ("feature_min", fmin), ("feature_max", fmax)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "score_range", (float(lo), float(hi)))

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def to_dict(self) -> dict:
        return {
            "kind": "svr",
            "gamma": self.gamma,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "score_range": list(self.score_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SvrModel":
        try:
            return cls(
                support_vectors=np.array(data["support_vectors"], dtype=np.float64),
                dual_coeffs=np.array(data["dual_coeffs"], dtype=np.float64),
                gamma=float(data["gamma"]),
                bias=float(data["bias"]),
                feature_min=np.array(data["feature_min"], dtype=np.float64),
                feature_max=np.array(data["feature_max"], dtype=np.float64),
                score_range=(float(data["score_range"][0]),
                             float(data["score_range"][1])),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise FileFormatError(f"malformed SVR model: {exc}") from None


def save_svr_model(model: SvrModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True, indent=1))


def load_svr_model(path) -> SvrModel:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict) or data.get("kind") != "svr":
        raise FileFormatError(f"{path}: not an SVR model file")
    try:
        return SvrModel.from_dict(data)
    except (ShapeError, DomainError, DegenerateInputError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def brisque_score(features, model: SvrModel) -> float:
    """Map an NSS feature vector to a quality score via the model's SVR.

    Features are min-max scaled to [-1, 1] with the model's training
    ranges, run through the RBF kernel sum, and clamped to the model's
    score range.
    """
    f = np.asarray(features, dtype=np.float64).reshape(-1)
    if f.shape[0] != model.dim:
        raise ShapeError(
            f"feature length {f.shape[0]} does not match model dim {model.dim}"
        )
    scaled = -1.0 + 2.0 * (f - model.feature_min) / (model.feature_max - model.feature_min)
    diff = model.support_vectors - scaled
    kern = np.exp(-model.gamma * np.sum(diff * diff, axis=1))
    raw = float(model.dual_coeffs @ kern) + model.bias
    lo, hi = model.score_range
    return min(max(raw, lo), hi)


# ---------------------------------------------------------------------------
# NIQE scoring (multivariate Gaussian distance)


@dataclass(frozen=True)
class MvgModel:
    """Mean and covariance of a Gaussian fit over NSS feature vectors."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        d = mean.shape[0]
        if d < 1 or cov.shape != (d, d):
            raise ShapeError(f"cov shape {cov.shape} does not match dim {d}")
        if float(np.max(np.abs(cov - cov.T))) > 1e-8:
            raise ShapeError("covariance is not symmetric within 1e-8")
        sym = (cov + cov.T) / 2.0
        vals = np.linalg.eigvalsh(sym)
        scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
        if float(vals.min()) < -1e-8 * scale:
            raise DegenerateInputError(
                "covariance is not positive semidefinite within 1e-8"
            )
        mean = mean.copy()
        sym = sym.copy()
        mean.flags.writeable = False
        sym.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", sym)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"kind": "mvg", "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MvgModel":
        try:
            return cls(mean=np.array(data["mean"], dtype=np.float64),
                       cov=np.array(data["cov"], dtype=np.float64))
        except (KeyError, TypeError) as exc:
            raise FileFormatError(f"malformed MVG model: {exc}") from None


def save_mvg_model(model: MvgModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True, indent=1))


def load_mvg_model(path) -> MvgModel:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict) or data.get("kind") != "mvg":
        raise FileFormatError(f"{path}: not an MVG model file")
    try:
        return MvgModel.from_dict(data)
    except (ShapeError, DegenerateInputError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def fit_niqe_model(corpus_features) -> MvgModel:
    """Fit the natural-corpus Gaussian model from NSS feature vectors.

    Requires at least dim+1 vectors (37 for the standard 36-dim
    features) so the covariance is generically full-rank; warns if it
    still comes out rank-deficient.
    """
    arr = np.asarray(corpus_features, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"corpus features must be n x d, got shape {arr.shape}")
    n, d = arr.shape
    if n < d + 1:
        raise InsufficientDataError(
            f"need at least {d + 1} feature vectors for a {d}-dim model, got {n}"
        )
    mean = arr.mean(axis=0)
    cov = np.atleast_2d(np.cov(arr, rowvar=False))
    cov = (cov + cov.T) / 2.0
    vals = np.linalg.eigvalsh(cov)
    scale = max(float(vals.max()), 1e-300)
    if float(vals.min()) <= 1e-10 * scale:
        warnings.warn(
            "corpus covariance is rank-deficient; NIQE scoring will need "
            "the pseudo-inverse fallback",
            stacklevel=2,
        )
    return MvgModel(mean=mean, cov=cov)


def mvg_distance(a: MvgModel, b: MvgModel, pseudo_inverse: bool = True) -> float:
    """Mahalanobis-style distance between two Gaussian models.

    sqrt((m_a - m_b)^T ((C_a + C_b)/2)^(-1) (m_a - m_b)); when the
    pooled covariance is singular the pseudo-inverse is used if allowed,
    otherwise the call fails.
    """
    if a.dim != b.dim:
        raise ShapeError(f"model dims differ: {a.dim} vs {b.dim}")
    pooled = (a.cov + b.cov) / 2.0
    diff = a.mean - b.mean
    try:
        chol = np.linalg.cholesky(pooled)
        half = np.linalg.solve(chol, diff)
        d2 = float(half @ half)
    except np.linalg.LinAlgError:
        if not pseudo_inverse:
            raise DegenerateInputError(
                "singular pooled covariance (pseudo-inverse disabled)"
            ) from None
        d2 = float(diff @ np.linalg.pinv(pooled, hermitian=True) @ diff)
    return math.sqrt(max(d2, 0.0))


def niqe_score(test_features, natural: MvgModel,
               pseudo_inverse: bool = True) -> float:
    """Distance of an image's patch NSS statistics from the natural model."""
    arr = np.asarray(test_features, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"test features must be n x d, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 test feature vectors, got {arr.shape[0]}"
        )
    if arr.shape[1] != natural.dim:
        raise ShapeError(
            f"feature dim {arr.shape[1]} does not match model dim {natural.dim}"
        )
    mean = arr.mean(axis=0)
    cov = np.atleast_2d(np.cov(arr, rowvar=False))
    cov = (cov + cov.T) / 2.0
    test_model = MvgModel(mean=mean, cov=cov)
    return mvg_distance(natural, test_model, pseudo_inverse=pseudo_inverse)


# ---------------------------------------------------------------------------
# RAPS and the curve Fréchet distance

NYQUIST = 0.5


@dataclass(frozen=True)
class RapsCurve:
    """Radially averaged power spectrum: (radius, mean power) points."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(p)) for r, p in self.points)
        if len(pts) < 2:
            raise InsufficientDataError("a RAPS curve needs at least 2 points")
        radii = [r for r, _ in pts]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ShapeError("curve radii must be strictly increasing")
        if any(p < 0 for _, p in pts):
            raise DomainError("curve powers must be non-negative")
        object.__setattr__(self, "points", pts)

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def power(self) -> np.ndarray:
        return np.array([p for _, p in self.points])


def raps_profile(img: ImageGrid, n_bins: int):
    """Annular spectral-power profile of a square image.

    Returns (bin centers, per-bin mean power, per-bin pixel counts) over
    equal-width radial bins spanning (0, Nyquist].  The DC component is
    excluded; frequencies beyond Nyquist (the spectrum corners) fold
    into the outermost bin so that binned power accounts for all non-DC
    energy.  Empty bins carry count 0 and mean 0.
    """
    if img.height != img.width:
        raise ShapeError(
            f"RAPS needs a square image, got {img.width}x{img.height} "
            "(resample first)"
        )
    if n_bins < 2:
        raise DomainError(f"n_bins must be at least 2, got {n_bins}")
    vals = img.values64()
    power = np.abs(np.fft.fft2(vals)) ** 2
    freq = np.fft.fftfreq(img.height)
    radius = np.sqrt(freq[:, None] ** 2 + freq[None, :] ** 2)
    include = radius > 0.0
    r = radius[include]
    p = power[include]
    idx = np.minimum((r / NYQUIST * n_bins).astype(np.intp), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=p, minlength=n_bins)
    means = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    edges = np.linspace(0.0, NYQUIST, n_bins + 1)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, means, counts


def raps(img: ImageGrid, n_bins: int = 64) -> RapsCurve:
    """Radially averaged power spectrum as a curve (empty bins dropped)."""
    centers, means, counts = raps_profile(img, n_bins)
    pts = [(float(c), float(m)) for c, m, k in zip(centers, means, counts) if k > 0]
    return RapsCurve(points=tuple(pts))


def discrete_frechet(p: np.ndarray, q: np.ndarray) -> float:
    """Discrete Fréchet distance between two point sequences.

    Standard dynamic-programming coupling recursion with the Euclidean
    point metric.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise ShapeError("point sequences must be n x d with matching d")
    if p.shape[0] < 1 or q.shape[0] < 1:
        raise InsufficientDataError("point sequences must be non-empty")
    diff = p[:, None, :] - q[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    n, m = dist.shape
    ca = np.empty((n, m))
    ca[0, 0] = dist[0, 0]
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], dist[i, 0])
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], dist[0, j])
    for i in range(1, n):
        for j in range(1, m):
            ca[i, j] = max(
                min(ca[i - 1, j], ca[i, j - 1], ca[i - 1, j - 1]),
                dist[i, j],
            )
    return float(ca[-1, -1])


def frechet_curve_distance(
    a: RapsCurve,
    b: RapsCurve,
    log_power: bool = True,
    power_floor: float = 1e-12,
) -> float:
    """Discrete Fréchet distance between two RAPS curves.

    Points are embedded as (radius / Nyquist, log10(power + floor)) by
    default, so the low-frequency bins cannot dominate the coupling by
    raw magnitude; set ``log_power=False`` for linear power.
    """
    def embed(c: RapsCurve) -> np.ndarray:
        r = c.radii / NYQUIST
        p = c.power
        y = np.log10(p + power_floor) if log_power else p
        return np.column_stack([r, y])

    return discrete_frechet(embed(a), embed(b))


def raps_fd(x: ImageGrid, y_hat: ImageGrid, n_bins: int = 64,
            log_power: bool = True) -> float:
    """RAPS Fréchet distance between two images of identical size."""
    if x.shape != y_hat.shape:
        raise ShapeError(f"image dimensions differ: {x.shape} vs {y_hat.shape}")
    return frechet_curve_distance(
        raps(x, n_bins), raps(y_hat, n_bins), log_power=log_power
    )


# ---------------------------------------------------------------------------
# External score ingestion


def read_external_scores(path) -> dict[str, float]:
    """Read a CSV of ``image_id,score`` rows into a map.

    A single header row reading ``image_id,score`` is tolerated.  Blank
    lines are skipped; duplicate ids and malformed rows are rejected.
    An empty file yields an empty map with a warning.
    """
    out: dict[str, float] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != 2:
                raise FileFormatError(
                    f"{path}:{lineno}: expected 'image_id,score', got {row!r}"
                )
            name = row[0].strip()
            if lineno == 1 and name == "image_id" and row[1].strip() == "score":
                continue
            if name in out:
                raise FileFormatError(f"{path}:{lineno}: duplicate id {name!r}")
            try:
                value = float(row[1])
            except ValueError:
                raise FileFormatError(
                    f"{path}:{lineno}: non-numeric score {row[1]!r}"
                ) from None
            if not math.isfinite(value):
                raise FileFormatError(f"{path}:{lineno}: non-finite score")
            out[name] = value
    if not out:
        warnings.warn(f"{path}: no scores found", stacklevel=2)
    return out
