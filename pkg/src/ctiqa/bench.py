"""Per-metric wall-clock benchmark over a corpus.

Times each metric across every scoreable manifest entry with the
monotonic clock and reports mean and standard deviation of the
per-slice time across repetitions.  Warmup repetitions populate the
image and resource caches and are excluded from the statistics, so the
reported numbers reflect computation rather than file I/O.
"""
from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass

import numpy as np

from .config import Config
from .errors import DegenerateInputError, DomainError, ToolkitError
from .manifest import CorpusManifest
from .scoring import ScoreEngine

BENCH_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TimingRow:
    metric: str
    mean_s: float
    std_s: float
    n_reps: int
    n_slices: int


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[TimingRow, ...]
    environment: str
    repetitions: int
    warmup: int

    def to_dict(self) -> dict:
        return {
            "schema_version": BENCH_SCHEMA_VERSION,
            "environment": self.environment,
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "rows": [
                {
                    "metric": r.metric,
                    "mean_seconds_per_slice": r.mean_s,
                    "std_seconds_per_slice": r.std_s,
                    "n_reps": r.n_reps,
                    "n_slices": r.n_slices,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "mean_seconds_per_slice",
                         "std_seconds_per_slice", "n_reps", "n_slices"])
        for r in self.rows:
            writer.writerow([r.metric, repr(r.mean_s), repr(r.std_s),
                             r.n_reps, r.n_slices])
        return buf.getvalue()

    def render_text(self) -> str:
        lines = ["Average computational time per slice (seconds)"]
        lines.append(f"environment: {self.environment}")
        lines.append(
            f"repetitions: {self.repetitions} (warmup {self.warmup} excluded)"
        )
        name_w = max(len(r.metric) for r in self.rows) + 2
        for r in self.rows:
            lines.append(
                f"{r.metric.ljust(name_w)}{r.mean_s:.6f} +/- {r.std_s:.6f}"
            )
        return "\n".join(lines) + "\n"


def _environment_note() -> str:
    return (
        f"python {platform.python_version()}, numpy {np.__version__}, "
        f"{platform.system()} {platform.machine()}"
    )


def run_benchmark(
    manifest: CorpusManifest,
    config: Config | None = None,
    metrics=None,
    repetitions: int = 10,
    warmup: int = 1,
    loader=None,
) -> TimingReport:
    """Benchmark the selected metrics; single-threaded by design.

    Entries a metric cannot score (missing reference, degenerate input)
    are skipped with a warning baked into the row's slice count; a
    metric with no scoreable entry raises.
    """
    if repetitions < 5:
        raise DomainError(f"need at least 5 repetitions, got {repetitions}")
    if warmup < 1:
        raise DomainError(f"need at least 1 warmup repetition, got {warmup}")
    if not manifest.entries:
        raise DegenerateInputError("empty corpus: nothing to benchmark")
    engine = ScoreEngine(manifest, config, metrics, loader=loader)
    entries = sorted(manifest.entries, key=lambda e: e.image_id)
    caches = {e.image_id: {} for e in entries}
    rows = []
    for metric in engine.metrics:
        # warmup also discovers which entries this metric can score
        usable = []
        for entry in entries:
            try:
                engine.metric_value(metric, entry, caches[entry.image_id])
                usable.append(entry)
            except (ToolkitError, OSError):
                continue
        if not usable:
            raise DegenerateInputError(
                f"metric {metric} cannot score any corpus entry"
            )
        for _ in range(warmup - 1):
            for entry in usable:
                engine.metric_value(metric, entry, caches[entry.image_id])
        samples = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for entry in usable:
                engine.metric_value(metric, entry, caches[entry.image_id])
            t1 = time.perf_counter()
            samples.append((t1 - t0) / len(usable))
        arr = np.array(samples)
        rows.append(TimingRow(
            metric=metric,
            mean_s=float(arr.mean()),
            std_s=float(arr.std()),
            n_reps=repetitions,
            n_slices=len(usable),
        ))
    return TimingReport(
        rows=tuple(rows),
        environment=_environment_note(),
        repetitions=repetitions,
        warmup=warmup,
    )
