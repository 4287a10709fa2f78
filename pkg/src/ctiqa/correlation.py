"""Correlation study over per-image metric scores.

Holds the score table (images x metrics with a missing-value mask and
the four-class metric taxonomy), Pearson/Spearman correlation, the
triangular absolute-correlation matrix (|PLCC| below the diagonal,
|SROCC| above), strength classification, and class-averaged summaries.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateInputError,
    DomainError,
    FileFormatError,
    InsufficientDataError,
    ShapeError,
)

TABLE_SCHEMA_VERSION = 1


class MetricClass(enum.Enum):
    PIXEL = "pixel"
    PERCEPTUAL = "perceptual"
    DISTRIBUTION = "distribution"
    NO_REFERENCE = "no-reference"


PAIRED_CLASSES = frozenset({MetricClass.PIXEL, MetricClass.PERCEPTUAL})

# The standard taxonomy: pixel and perceptual metrics need a reference
# (paired); distribution and no-reference metrics do not (unpaired).
DEFAULT_METRIC_CLASSES: dict[str, MetricClass] = {
    "MSE": MetricClass.PIXEL,
    "PSNR": MetricClass.PIXEL,
    "SSIM": MetricClass.PIXEL,
    "VIF": MetricClass.PERCEPTUAL,
    "LPIPS1": MetricClass.PERCEPTUAL,
    "LPIPS2": MetricClass.PERCEPTUAL,
    "LPIPS3": MetricClass.PERCEPTUAL,
    "FID": MetricClass.DISTRIBUTION,
    "KID": MetricClass.DISTRIBUTION,
    "IS": MetricClass.DISTRIBUTION,
    "SNR": MetricClass.NO_REFERENCE,
    "BRISQUE": MetricClass.NO_REFERENCE,
    "RAPS-FD": MetricClass.NO_REFERENCE,
    "PaQ-2-PiQ": MetricClass.NO_REFERENCE,
    "NIQE": MetricClass.NO_REFERENCE,
}


def metric_class_of(name: str) -> MetricClass:
    try:
        return DEFAULT_METRIC_CLASSES[name]
    except KeyError:
        raise DomainError(f"unknown metric {name!r}") from None


def is_paired_metric(name: str) -> bool:
    return metric_class_of(name) in PAIRED_CLASSES


@dataclass(frozen=True)
class MetricInfo:
    name: str
    cls: MetricClass


@dataclass
class MetricTable:
    """Per-image metric scores with a missing-value mask.

    ``values`` is images x metrics (float64, NaN where missing);
    ``missing`` is the boolean mask; ``reasons`` explains masked cells,
    keyed by (image_id, metric name).
    """

    image_ids: list[str]
    metrics: list[MetricInfo]
    values: np.ndarray
    missing: np.ndarray
    reasons: dict[tuple[str, str], str] = field(default_factory=dict)
    patient_ids: list[str | None] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.missing = np.asarray(self.missing, dtype=bool)
        n, m = len(self.image_ids), len(self.metrics)
        if self.values.shape != (n, m) or self.missing.shape != (n, m):
            raise ShapeError(
                f"table dims inconsistent: {n} images x {m} metrics vs "
                f"values {self.values.shape}, mask {self.missing.shape}"
            )
        if len(set(self.image_ids)) != n:
            raise ShapeError("image ids must be unique")
        if len({m.name for m in self.metrics}) != m:
            raise ShapeError("metric names must be unique")
        if self.patient_ids is not None and len(self.patient_ids) != n:
            raise ShapeError("patient_ids length must match image count")

    @property
    def metric_names(self) -> list[str]:
        return [m.name for m in self.metrics]

    def metric_index(self, name: str) -> int:
        try:
            return self.metric_names.index(name)
        except ValueError:
            raise DomainError(f"metric {name!r} not in table") from None

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(values, present-mask) of one metric column."""
        j = self.metric_index(name)
        return self.values[:, j], ~self.missing[:, j]

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        vals = [
            [None if self.missing[i, j] else self.values[i, j]
             for j in range(len(self.metrics))]
            for i in range(len(self.image_ids))
        ]
        return {
            "schema_version": TABLE_SCHEMA_VERSION,
            "image_ids": list(self.image_ids),
            "patient_ids": list(self.patient_ids) if self.patient_ids else None,
            "metrics": [{"name": m.name, "class": m.cls.value} for m in self.metrics],
            "values": vals,
            "reasons": {f"{i}\t{m}": r for (i, m), r in sorted(self.reasons.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricTable":
        try:
            ids = list(data["image_ids"])
            metrics = [MetricInfo(m["name"], MetricClass(m["class"]))
                       for m in data["metrics"]]
            raw = data["values"]
            reasons = {}
            for key, reason in data.get("reasons", {}).items():
                image_id, _, metric = key.partition("\t")
                reasons[(image_id, metric)] = reason
            patient_ids = data.get("patient_ids")
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"malformed metric table: {exc}") from None
        n, m = len(ids), len(metrics)
        values = np.full((n, m), np.nan)
        missing = np.ones((n, m), dtype=bool)
        for i in range(n):
            for j in range(m):
                cell = raw[i][j]
                if cell is not None:
                    values[i, j] = float(cell)
                    missing[i, j] = False
        return cls(ids, metrics, values, missing, reasons,
                   list(patient_ids) if patient_ids else None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["image_id"]
        if self.patient_ids is not None:
            header.append("patient_id")
        header.extend(self.metric_names)
        writer.writerow(header)
        for i, image_id in enumerate(self.image_ids):
            row: list[str] = [image_id]
            if self.patient_ids is not None:
                row.append(self.patient_ids[i] or "")
            for j in range(len(self.metrics)):
                row.append("" if self.missing[i, j]
                           else repr(float(self.values[i, j])))
            writer.writerow(row)
        return buf.getvalue()

    def save(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(self.to_json())
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv())


def load_table(path) -> MetricTable:
    """Load a metric table from its JSON serialization.

    Accepts either a bare table dict or a scoring document that wraps
    the table under a ``"table"`` key.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    if isinstance(data, dict) and "image_ids" not in data and "table" in data:
        data = data["table"]
    return MetricTable.from_dict(data)


# ---------------------------------------------------------------------------
# Correlation coefficients


def _check_pair_vectors(u, v) -> tuple[np.ndarray, np.ndarray]:
    ua = np.asarray(u, dtype=np.float64).reshape(-1)
    va = np.asarray(v, dtype=np.float64).reshape(-1)
    if ua.shape[0] != va.shape[0]:
        raise ShapeError(f"length mismatch: {ua.shape[0]} vs {va.shape[0]}")
    if ua.shape[0] < 3:
        raise InsufficientDataError(
            f"need at least 3 paired samples, got {ua.shape[0]}"
        )
    if not (np.all(np.isfinite(ua)) and np.all(np.isfinite(va))):
        raise DegenerateInputError("correlation inputs must be finite")
    if np.all(ua == ua[0]) or np.all(va == va[0]):
        raise DegenerateInputError("constant input has no defined correlation")
    return ua, va


def plcc(u, v) -> float:
    """Pearson product-moment correlation coefficient."""
    ua, va = _check_pair_vectors(u, v)
    um = ua - ua.mean()
    vm = va - va.mean()
    r = float(um @ vm) / math.sqrt(float(um @ um) * float(vm @ vm))
    return min(1.0, max(-1.0, r))


def srocc(u, v) -> float:
    """Spearman rank-order correlation (average ranks on ties)."""
    ua, va = _check_pair_vectors(u, v)
    return plcc(rankdata(ua, method="average"), rankdata(va, method="average"))


class StrengthLabel(enum.Enum):
    POOR = "poor"
    FAIR = "fair"
    MODERATE = "moderate"
    STRONG = "strong"


DEFAULT_STRENGTH_EDGES = (0.3, 0.6, 0.8)


def classify_strength(r: float,
                      edges: tuple[float, float, float] = DEFAULT_STRENGTH_EDGES
                      ) -> StrengthLabel:
    """Bin an absolute correlation into poor/fair/moderate/strong.

    Half-open bins [0, e0), [e0, e1), [e1, e2), [e2, 1].
    """
    if not (0.0 <= r <= 1.0):
        raise DomainError(f"absolute correlation must lie in [0, 1], got {r}")
    if not (0.0 < edges[0] < edges[1] < edges[2] <= 1.0):
        raise DomainError(f"strength edges must increase within (0, 1]: {edges}")
    if r < edges[0]:
        return StrengthLabel.POOR
    if r < edges[1]:
        return StrengthLabel.FAIR
    if r < edges[2]:
        return StrengthLabel.MODERATE
    return StrengthLabel.STRONG


def _complete_pair(table: MetricTable, name_a: str, name_b: str
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise-complete column values, ordered by image id."""
    va, pa = table.column(name_a)
    vb, pb = table.column(name_b)
    both = pa & pb
    idx = [i for i in range(len(table.image_ids)) if both[i]]
    idx.sort(key=lambda i: table.image_ids[i])
    if len(idx) < 3:
        raise InsufficientDataError(
            f"metrics {name_a!r} and {name_b!r} share only {len(idx)} "
            "complete rows (need 3)"
        )
    sel = np.array(idx, dtype=np.intp)
    return va[sel], vb[sel]


def pair_correlations(table: MetricTable, name_a: str, name_b: str
                      ) -> tuple[float, float]:
    """(|PLCC|, |SROCC|) of two metrics over pairwise-complete rows."""
    ua, va = _complete_pair(table, name_a, name_b)
    return abs(plcc(ua, va)), abs(srocc(ua, va))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Square |correlation| layout: |PLCC| lower triangle, |SROCC| upper.

    The diagonal carries no value (NaN).
    """

    metric_names: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        k = len(self.metric_names)
        if arr.shape != (k, k):
            raise ShapeError(f"entries must be {k}x{k}, got {arr.shape}")
        off = ~np.eye(k, dtype=bool)
        vals = arr[off]
        if vals.size and (np.nanmin(vals) < 0.0 or np.nanmax(vals) > 1.0):
            raise DomainError("off-diagonal entries must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "metric_names", tuple(self.metric_names))

    def plcc_of(self, a: str, b: str) -> float:
        i = self.metric_names.index(a)
        j = self.metric_names.index(b)
        return float(self.entries[max(i, j), min(i, j)])

    def srocc_of(self, a: str, b: str) -> float:
        i = self.metric_names.index(a)
        j = self.metric_names.index(b)
        return float(self.entries[min(i, j), max(i, j)])

    def to_dict(self) -> dict:
        k = len(self.metric_names)
        return {
            "schema_version": TABLE_SCHEMA_VERSION,
            "metric_names": list(self.metric_names),
            "layout": "lower=|PLCC| upper=|SROCC| diagonal=absent",
            "entries": [
                [None if i == j else self.entries[i, j] for j in range(k)]
                for i in range(k)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lower=|PLCC| upper=|SROCC|"] + list(self.metric_names))
        for i, name in enumerate(self.metric_names):
            row = [name]
            for j in range(len(self.metric_names)):
                row.append("" if i == j else repr(float(self.entries[i, j])))
            writer.writerow(row)
        return buf.getvalue()

    def render_text(self, edges=DEFAULT_STRENGTH_EDGES) -> str:
        """Triangular table with strength annotations per cell."""
        names = self.metric_names
        width = max(len(n) for n in names) + 2
        cell_w = 12
        lines = []
        lines.append("lower triangle: |PLCC|; upper triangle: |SROCC|")
        lines.append(
            "strength bins: poor [0,{0}), fair [{0},{1}), moderate [{1},{2}), "
            "strong [{2},1]".format(*edges)
        )
        header = " " * width + "".join(n.rjust(cell_w) for n in names)
        lines.append(header)
        for i, name in enumerate(names):
            row = name.ljust(width)
            for j in range(len(names)):
                if i == j:
                    row += "-".rjust(cell_w)
                else:
                    val = float(self.entries[i, j])
                    tag = classify_strength(min(val, 1.0), edges).value[0].upper()
                    row += f"{val:.3f}({tag})".rjust(cell_w)
            lines.append(row)
        return "\n".join(lines) + "\n"


def correlation_matrix(table: MetricTable, subset=None) -> CorrelationMatrix:
    """Pairwise |PLCC|/|SROCC| matrix over a metric subset.

    Rows with missing values are dropped pairwise, not listwise; every
    pair must retain at least 3 complete rows.
    """
    names = list(subset) if subset is not None else table.metric_names
    for name in names:
        table.metric_index(name)
    k = len(names)
    if k < 2:
        raise InsufficientDataError("need at least 2 metrics for a matrix")
    entries = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i + 1, k):
            p, s = pair_correlations(table, names[i], names[j])
            entries[j, i] = min(p, 1.0)
            entries[i, j] = min(s, 1.0)
    return CorrelationMatrix(tuple(names), entries)


# ---------------------------------------------------------------------------
# Class-averaged summary


@dataclass(frozen=True)
class GroupAverageRow:
    unpaired_metric: str
    group: str
    plcc_mean: float
    plcc_std: float
    srocc_mean: float
    srocc_std: float


@dataclass(frozen=True)
class GroupAverageTable:
    rows: tuple[GroupAverageRow, ...]
    groups: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": TABLE_SCHEMA_VERSION,
            "groups": list(self.groups),
            "rows": [
                {
                    "unpaired_metric": r.unpaired_metric,
                    "group": r.group,
                    "plcc_mean": r.plcc_mean,
                    "plcc_std": r.plcc_std,
                    "srocc_mean": r.srocc_mean,
                    "srocc_std": r.srocc_std,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["unpaired_metric", "group", "plcc_mean", "plcc_std",
                         "srocc_mean", "srocc_std"])
        for r in self.rows:
            writer.writerow([r.unpaired_metric, r.group, repr(r.plcc_mean),
                             repr(r.plcc_std), repr(r.srocc_mean),
                             repr(r.srocc_std)])
        return buf.getvalue()

    def render_text(self) -> str:
        """Mean +/- std per cell, PLCC first, SROCC in parentheses."""
        metrics = []
        for r in self.rows:
            if r.unpaired_metric not in metrics:
                metrics.append(r.unpaired_metric)
        by_key = {(r.unpaired_metric, r.group): r for r in self.rows}
        name_w = max(len(m) for m in metrics) + 2
        cell_w = max(len(g) for g in self.groups) + 2
        cell_w = max(cell_w, 26)
        lines = ["mean |PLCC| +/- std (mean |SROCC| +/- std) per paired group"]
        lines.append(" " * name_w + "".join(g.rjust(cell_w) for g in self.groups))
        for m in metrics:
            row = m.ljust(name_w)
            for g in self.groups:
                r = by_key[(m, g)]
                cell = (f"{r.plcc_mean:.2f}+/-{r.plcc_std:.2f} "
                        f"({r.srocc_mean:.2f}+/-{r.srocc_std:.2f})")
                row += cell.rjust(cell_w)
            lines.append(row)
        return "\n".join(lines) + "\n"


def group_average(table: MetricTable, unpaired_names,
                  paired_groups: dict[str, list[str]]) -> GroupAverageTable:
    """Mean and std of |PLCC|/|SROCC| per unpaired metric and paired group.

    The spread is the population standard deviation across the group's
    member correlations.
    """
    rows = []
    for group, members in paired_groups.items():
        if not members:
            raise DegenerateInputError(f"group {group!r} is empty")
    for unpaired in unpaired_names:
        for group, members in paired_groups.items():
            ps, ss = [], []
            for member in members:
                p, s = pair_correlations(table, unpaired, member)
                ps.append(p)
                ss.append(s)
            rows.append(GroupAverageRow(
                unpaired_metric=unpaired,
                group=group,
                plcc_mean=float(np.mean(ps)),
                plcc_std=float(np.std(ps)),
                srocc_mean=float(np.mean(ss)),
                srocc_std=float(np.std(ss)),
            ))
    return GroupAverageTable(tuple(rows), tuple(paired_groups))
