"""CART regression from scratch, cross-validated feature importance.

Trees minimize the sum of squared errors.  At each node the split
search is exhaustive over (feature, midpoint-of-consecutive-distinct-
values threshold) candidates; the winner maximizes the SSE reduction

    gain = SSE(parent) - SSE(left) - SSE(right)

with ties broken toward the lowest feature index, then the lowest
threshold.  Feature importance is each feature's share of the total
gain accumulated over the tree's splits.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlation import MetricTable
from .errors import (
    DegenerateInputError,
    DomainError,
    InsufficientDataError,
    ShapeError,
)


@dataclass(frozen=True)
class TreeParams:
    """Growth limits: depth, leaf occupancy, and minimum SSE reduction."""

    max_depth: int | None = 8
    min_samples_leaf: int = 5
    min_impurity_decrease: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise DomainError("max_depth must be None or >= 0")
        if self.min_samples_leaf < 1:
            raise DomainError("min_samples_leaf must be >= 1")
        if self.min_impurity_decrease < 0:
            raise DomainError("min_impurity_decrease must be >= 0")


@dataclass
class TreeNode:
    """One node; leaves have ``feature`` None."""

    value: float
    n_samples: int
    feature: int | None = None
    threshold: float = 0.0
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionTree:
    root: TreeNode
    n_features: int
    params: TreeParams

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def structure(self):
        """Nested tuples describing the tree, for structural comparison."""
        def walk(node: TreeNode):
            if node.is_leaf:
                return ("leaf", node.value, node.n_samples)
            return ("split", node.feature, node.threshold,
                    walk(node.left), walk(node.right))

        return walk(self.root)


def _best_split(x_cols: np.ndarray, y: np.ndarray, idx: np.ndarray,
                sse_parent: float, min_leaf: int):
    """Exhaustive candidate search at one node.

    Returns (gain, feature, threshold) of the best candidate or None.
    Candidate thresholds are midpoints between consecutive distinct
    sorted feature values (falling back to the lower value when the
    midpoint rounds onto the upper one).
    """
    best = None
    n = idx.shape[0]
    y_node = y[idx]
    for f in range(x_cols.shape[1]):
        xs = x_cols[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        ys_s = y_node[order]
        cum1 = np.cumsum(ys_s)
        cum2 = np.cumsum(ys_s * ys_s)
        tot1 = cum1[-1]
        tot2 = cum2[-1]
        for i in range(n - 1):
            hi = xs_s[i + 1]
            lo = xs_s[i]
            if hi == lo:
                continue
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sse_l = max(cum2[i] - cum1[i] * cum1[i] / nl, 0.0)
            rs1 = tot1 - cum1[i]
            sse_r = max((tot2 - cum2[i]) - rs1 * rs1 / nr, 0.0)
            gain = sse_parent - sse_l - sse_r
            thr = lo + (hi - lo) / 2.0
            if not (lo <= thr < hi):
                thr = lo
            if best is None or gain > best[0]:
                best = (gain, f, float(thr))
    return best


def fit_tree(x, y, params: TreeParams | None = None) -> RegressionTree:
    """Grow a CART regression tree.

    Raises:
        InsufficientDataError: fewer than 2 samples.
        DegenerateInputError: non-finite features or targets.
    """
    if params is None:
        params = TreeParams()
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64).reshape(-1)
    if xa.ndim != 2:
        raise ShapeError(f"features must be samples x features, got {xa.shape}")
    if xa.shape[0] != ya.shape[0]:
        raise ShapeError(
            f"feature rows {xa.shape[0]} do not match targets {ya.shape[0]}"
        )
    if xa.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {xa.shape[0]}")
    if xa.shape[1] < 1:
        raise ShapeError("need at least one feature column")
    if not np.all(np.isfinite(xa)):
        raise DegenerateInputError("features must be finite")
    if not np.all(np.isfinite(ya)):
        raise DegenerateInputError("targets must be finite")

    def node_of(idx: np.ndarray, depth: int) -> TreeNode:
        ys = ya[idx]
        value = float(ys.mean())
        node = TreeNode(value=value, n_samples=idx.shape[0])
        if np.all(ys == ys[0]):
            return node
        if params.max_depth is not None and depth >= params.max_depth:
            return node
        if idx.shape[0] < 2 * params.min_samples_leaf:
            return node
        sse_parent = float(np.sum((ys - value) ** 2))
        best = _best_split(xa, ya, idx, sse_parent, params.min_samples_leaf)
        if best is None:
            return node
        gain, feature, threshold = best
        if gain <= params.min_impurity_decrease or gain <= 0.0:
            return node
        go_left = xa[idx, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.gain = gain
        node.left = node_of(idx[go_left], depth + 1)
        node.right = node_of(idx[~go_left], depth + 1)
        return node

    root = node_of(np.arange(xa.shape[0]), 0)
    return RegressionTree(root=root, n_features=xa.shape[1], params=params)


def predict(tree: RegressionTree, x) -> float:
    """Route one feature vector to its leaf mean (x[f] <= thr goes left)."""
    xa = np.asarray(x, dtype=np.float64).reshape(-1)
    if xa.shape[0] != tree.n_features:
        raise ShapeError(
            f"feature length {xa.shape[0]} does not match training "
            f"({tree.n_features})"
        )
    node = tree.root
    while not node.is_leaf:
        node = node.left if xa[node.feature] <= node.threshold else node.right
    return node.value


def predict_many(tree: RegressionTree, x) -> np.ndarray:
    xa = np.asarray(x, dtype=np.float64)
    if xa.ndim != 2:
        raise ShapeError(f"expected samples x features, got shape {xa.shape}")
    return np.array([predict(tree, row) for row in xa])


def feature_importance(tree: RegressionTree) -> np.ndarray:
    """Per-feature share of total split gain; all zeros for a stump."""
    imp = np.zeros(tree.n_features)

    def walk(node: TreeNode) -> None:
        if node.is_leaf:
            return
        imp[node.feature] += node.gain
        walk(node.left)
        walk(node.right)

    walk(tree.root)
    total = float(imp.sum())
    if total > 0.0:
        imp = imp / total
    return imp


@dataclass(frozen=True)
class ImportanceReport:
    """Cross-validated importance of unpaired features for one label."""

    label: str
    feature_names: tuple[str, ...]
    importances: np.ndarray
    ranking: tuple[str, ...]
    per_fold_nrmse: tuple[float, ...]
    mean_nrmse: float
    flagged_folds: tuple[int, ...]
    k: int
    seed: int
    source: str = "cv-mean"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "feature_names": list(self.feature_names),
            "importances": [float(v) for v in self.importances],
            "ranking": list(self.ranking),
            "per_fold_nrmse": [
                None if math.isnan(v) else float(v) for v in self.per_fold_nrmse
            ],
            "mean_nrmse": self.mean_nrmse,
            "flagged_folds": list(self.flagged_folds),
            "k": self.k,
            "seed": self.seed,
            "source": self.source,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _rank_features(names, importances) -> tuple[str, ...]:
    order = sorted(range(len(names)), key=lambda i: (-importances[i], i))
    return tuple(names[i] for i in order)


def _fold_indices(n: int, k: int, seed: int,
                  groups: list[str] | None) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    if groups is None:
        perm = rng.permutation(n)
        return [fold for fold in np.array_split(perm, k)]
    uniq = sorted(set(groups))
    if len(uniq) < k:
        raise InsufficientDataError(
            f"{len(uniq)} groups cannot fill {k} folds"
        )
    shuffled = list(np.array(uniq, dtype=object)[rng.permutation(len(uniq))])
    assign = {g: i % k for i, g in enumerate(shuffled)}
    folds: list[list[int]] = [[] for _ in range(k)]
    for row, g in enumerate(groups):
        folds[assign[g]].append(row)
    return [np.array(f, dtype=np.intp) for f in folds]


def cross_validated_importance(
    table: MetricTable,
    label: str,
    features,
    k: int = 10,
    seed: int = 0,
    params: TreeParams | None = None,
    by_patient: bool = False,
    refit_final: bool = False,
) -> ImportanceReport:
    """K-fold CV of a tree predicting one paired metric from unpaired ones.

    Per fold: fit on the other folds, score NRMSE = RMSE / training
    target range on the held-out fold.  Folds whose training target is
    constant (zero range) are flagged, warned about, and excluded from
    the averages.  Importances are fold-averaged then renormalized, or
    taken from a final all-data refit when ``refit_final`` is set.
    """
    if params is None:
        params = TreeParams()
    if k < 2:
        raise DomainError(f"need k >= 2 folds, got {k}")
    feature_names = tuple(features)
    if not feature_names:
        raise DomainError("need at least one feature")
    y_all, y_present = table.column(label)
    present = y_present.copy()
    cols = []
    for name in feature_names:
        vals, ok = table.column(name)
        cols.append(vals)
        present &= ok
    rows = np.flatnonzero(present)
    if rows.shape[0] < k:
        raise InsufficientDataError(
            f"{rows.shape[0]} complete samples cannot fill {k} folds"
        )
    x = np.column_stack([c[rows] for c in cols])
    y = y_all[rows]
    groups = None
    if by_patient:
        if table.patient_ids is None:
            raise DomainError("table carries no patient ids")
        groups = [table.patient_ids[i] or "" for i in rows]
    folds = _fold_indices(rows.shape[0], k, seed, groups)

    per_fold = np.full(k, np.nan)
    flagged: list[int] = []
    imps: list[np.ndarray] = []
    for i in range(k):
        test_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
        if test_idx.size == 0 or train_idx.size == 0:
            flagged.append(i)
            warnings.warn(f"fold {i}: empty split, skipped", stacklevel=2)
            continue
        y_train = y[train_idx]
        y_range = float(y_train.max() - y_train.min())
        if y_range == 0.0:
            flagged.append(i)
            warnings.warn(
                f"fold {i}: constant training target, excluded from averages",
                stacklevel=2,
            )
            continue
        tree = fit_tree(x[train_idx], y_train, params)
        pred = predict_many(tree, x[test_idx])
        rmse = float(np.sqrt(np.mean((pred - y[test_idx]) ** 2)))
        per_fold[i] = rmse / y_range
        imps.append(feature_importance(tree))
    if not imps:
        raise DegenerateInputError("every fold was flagged; no usable fit")

    if refit_final:
        importances = feature_importance(fit_tree(x, y, params))
        source = "refit-final"
    else:
        importances = np.mean(imps, axis=0)
        source = "cv-mean"
    total = float(importances.sum())
    if total > 0.0:
        importances = importances / total
    mean_nrmse = float(np.nanmean(per_fold))
    return ImportanceReport(
        label=label,
        feature_names=feature_names,
        importances=importances,
        ranking=_rank_features(feature_names, importances),
        per_fold_nrmse=tuple(float(v) for v in per_fold),
        mean_nrmse=mean_nrmse,
        flagged_folds=tuple(flagged),
        k=k,
        seed=seed,
        source=source,
    )
