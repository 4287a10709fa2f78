"""Command-line interface.

Subcommands: ``preprocess`` (window/resize rasters), ``score`` (corpus
metric table), ``correlate`` (correlation matrices and group summary),
``importance`` (cross-validated tree importances and the ring chart),
``bench`` (per-metric timing), ``report`` (consolidated text report).

Exit codes: 0 success, 2 partial results (masked cells or skipped
artifacts), 1 fatal error.  All outputs are byte-stable for fixed
inputs and seed, and JSON outputs embed the config digest.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .bench import run_benchmark
from .config import Config, load_config, override
from .correlation import (
    MetricClass,
    MetricTable,
    PAIRED_CLASSES,
    correlation_matrix,
    group_average,
    load_table,
)
from .errors import InsufficientDataError, ToolkitError
from .image import Domain, load_csv_image, load_image, preprocess, save_image, WindowSpec
from .manifest import load_manifest
from .piechart import render_importance_chart
from .regression import TreeParams, cross_validated_importance
from .scoring import ScoreEngine
from .unpaired import RapsCurve  # noqa: F401  (re-export for scripting convenience)

SCHEMA_VERSION = 1


def _document(cfg: Config, payload: dict) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
    }
    doc.update(payload)
    return doc


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))


def _load_cfg(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    overrides = {}
    for attr, field in (
        ("seed", "seed"),
        ("patch_stride", "patch_stride"),
        ("raps_bins", "raps_bins"),
        ("niqe_patch", "niqe_patch"),
        ("k", "cv_folds"),
        ("max_depth", "tree_max_depth"),
        ("min_samples_leaf", "tree_min_samples_leaf"),
        ("min_impurity_decrease", "tree_min_impurity_decrease"),
    ):
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[field] = getattr(args, attr)
    if getattr(args, "peak_from_image", False):
        overrides["psnr_peak_from_image"] = True
    return override(cfg, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    src = Path(args.input)
    files = sorted(src.glob("*")) if src.is_dir() else [src]
    files = [f for f in files if f.suffix in (".iqai", ".csv")]
    if not files:
        print(f"error: no .iqai or .csv rasters under {src}", file=sys.stderr)
        return 1
    window = WindowSpec(cfg.window_center, cfg.window_width)
    domain = Domain.HU if args.domain == "hu" else Domain.NORMALIZED
    for f in files:
        img = load_csv_image(f, domain) if f.suffix == ".csv" else load_image(f)
        result = preprocess(
            img, window=window,
            size=(cfg.resize_width, cfg.resize_height),
            resize_first=cfg.preprocess_order[0] == "resize",
        )
        save_image(result, out / (f.stem + ".iqai"))
    print(f"preprocessed {len(files)} rasters into {out}")
    return 0


def cmd_score(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    manifest = load_manifest(args.manifest)
    engine = ScoreEngine(manifest, cfg, args.metrics)
    table = engine.run(jobs=args.jobs)
    _write_json(out / "metrics.json", _document(cfg, {"table": table.to_dict()}))
    (out / "metrics.csv").write_text(table.to_csv())
    masked = int(table.missing.sum())
    print(
        f"scored {len(table.image_ids)} images x {len(table.metrics)} metrics "
        f"({masked} masked cells) -> {out / 'metrics.json'}"
    )
    if masked:
        for (image_id, metric), reason in sorted(table.reasons.items()):
            print(f"  masked {image_id}/{metric}: {reason}", file=sys.stderr)
    return 2 if masked else 0


def _split_classes(table: MetricTable):
    paired, unpaired_names = [], []
    for info in table.metrics:
        (paired if info.cls in PAIRED_CLASSES else unpaired_names).append(info.name)
    return paired, unpaired_names


def _drop_constant_columns(table: MetricTable) -> tuple[MetricTable, list[str]]:
    keep, dropped = [], []
    for info in table.metrics:
        vals, present = table.column(info.name)
        live = vals[present]
        if live.size >= 1 and not (live == live[0]).all():
            keep.append(info.name)
        else:
            dropped.append(info.name)
    if not dropped:
        return table, []
    idx = [table.metric_index(n) for n in keep]
    sub = MetricTable(
        table.image_ids,
        [table.metrics[i] for i in idx],
        table.values[:, idx],
        table.missing[:, idx],
        {k: v for k, v in table.reasons.items() if k[1] in keep},
        table.patient_ids,
    )
    return sub, dropped


def _correlate_into(table: MetricTable, cfg: Config, out: Path) -> int:
    partial = 0
    table, dropped = _drop_constant_columns(table)
    for name in dropped:
        print(f"warning: metric {name} is constant; excluded", file=sys.stderr)
        partial = 2
    paired, unpaired_names = _split_classes(table)
    report_parts = [
        f"correlation study over {len(table.image_ids)} images",
        "strength bins: poor [0,{0}), fair [{0},{1}), moderate [{1},{2}), "
        "strong [{2},1]".format(*cfg.strength_edges),
        "",
    ]
    for title, names, stem in (
        ("unpaired metrics", unpaired_names, "unpaired_matrix"),
        ("paired metrics", paired, "paired_matrix"),
    ):
        if len(names) < 2:
            print(f"warning: fewer than 2 {title} present; matrix skipped",
                  file=sys.stderr)
            partial = 2
            continue
        matrix = correlation_matrix(table, names)
        _write_json(out / f"{stem}.json", _document(cfg, matrix.to_dict()))
        (out / f"{stem}.csv").write_text(matrix.to_csv())
        report_parts.append(f"== {title} ==")
        report_parts.append(matrix.render_text(cfg.strength_edges))
    groups = {}
    pixel = [n for n in paired if MetricClass.PIXEL is
             table.metrics[table.metric_index(n)].cls]
    perceptual = [n for n in paired if MetricClass.PERCEPTUAL is
                  table.metrics[table.metric_index(n)].cls]
    if pixel:
        groups["pixel-based"] = pixel
    if perceptual:
        groups["perceptual-based"] = perceptual
    if paired:
        groups["all-paired"] = paired
    if groups and unpaired_names:
        summary = group_average(table, unpaired_names, groups)
        _write_json(out / "group_summary.json", _document(cfg, summary.to_dict()))
        (out / "group_summary.csv").write_text(summary.to_csv())
        report_parts.append("== class-averaged correlations ==")
        report_parts.append(summary.render_text())
    else:
        print("warning: group summary skipped (need both paired and unpaired "
              "metrics)", file=sys.stderr)
        partial = 2
    (out / "correlation_report.txt").write_text("\n".join(report_parts))
    return partial


def cmd_correlate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    table = load_table(args.table)
    if len(table.image_ids) < 3:
        raise InsufficientDataError(
            f"correlation needs at least 3 images, got {len(table.image_ids)}"
        )
    code = _correlate_into(table, cfg, out)
    if args.per_patient:
        if table.patient_ids is None:
            print("warning: --per-patient requested but the table has no "
                  "patient ids", file=sys.stderr)
            code = 2
        else:
            for patient in sorted({p for p in table.patient_ids if p}):
                rows = [i for i, p in enumerate(table.patient_ids)
                        if p == patient]
                if len(rows) < 3:
                    print(f"warning: patient {patient} has {len(rows)} rows; "
                          "skipped", file=sys.stderr)
                    code = 2
                    continue
                sub = MetricTable(
                    [table.image_ids[i] for i in rows],
                    table.metrics,
                    table.values[rows],
                    table.missing[rows],
                    {k: v for k, v in table.reasons.items()
                     if k[0] in {table.image_ids[i] for i in rows}},
                    [table.patient_ids[i] for i in rows],
                )
                sub_dir = out / f"patient_{patient}"
                sub_dir.mkdir(parents=True, exist_ok=True)
                code = max(code, _correlate_into(sub, cfg, sub_dir))
    print(f"correlation artifacts written to {out}")
    return code


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in label)


def cmd_importance(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    table = load_table(args.table)
    paired, unpaired_names = _split_classes(table)
    if not paired:
        raise InsufficientDataError("table has no paired metric to predict")
    if not unpaired_names:
        raise InsufficientDataError("table has no unpaired features")
    params = TreeParams(
        max_depth=cfg.tree_max_depth,
        min_samples_leaf=cfg.tree_min_samples_leaf,
        min_impurity_decrease=cfg.tree_min_impurity_decrease,
    )
    reports = []
    partial = 0
    for label in paired:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = cross_validated_importance(
                    table, label, unpaired_names, k=cfg.cv_folds,
                    seed=cfg.seed, params=params,
                    by_patient=args.by_patient,
                    refit_final=args.refit_final,
                )
        except ToolkitError as exc:
            print(f"warning: label {label} skipped: {exc}", file=sys.stderr)
            partial = 2
            continue
        reports.append(rep)
        _write_json(out / f"importance_{_safe_name(label)}.json",
                    _document(cfg, rep.to_dict()))
    if not reports:
        raise InsufficientDataError("no label could be fitted")
    (out / "importance.svg").write_text(render_importance_chart(reports))
    lines = ["label,feature,importance,mean_nrmse"]
    for rep in reports:
        for name, value in zip(rep.feature_names, rep.importances):
            lines.append(f"{rep.label},{name},{float(value)!r},{rep.mean_nrmse!r}")
    (out / "importance_summary.csv").write_text("\n".join(lines) + "\n")
    print(f"importance artifacts for {len(reports)} labels written to {out}")
    return partial


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    manifest = load_manifest(args.manifest)
    report = run_benchmark(
        manifest, cfg, args.metrics,
        repetitions=args.repetitions, warmup=args.warmup,
    )
    _write_json(out / "timing.json", _document(cfg, report.to_dict()))
    (out / "timing.csv").write_text(report.to_csv())
    (out / "timing.txt").write_text(report.render_text())
    print(report.render_text(), end="")
    return 0


def cmd_report(args) -> int:
    src = Path(args.dir)
    parts = [f"consolidated report for {src}", ""]
    metrics_json = src / "metrics.json"
    if metrics_json.exists():
        doc = json.loads(metrics_json.read_text())
        table = MetricTable.from_dict(doc.get("table", doc))
        masked = int(table.missing.sum())
        parts.append(
            f"scores: {len(table.image_ids)} images x "
            f"{len(table.metrics)} metrics, {masked} masked cells"
        )
        if "config_digest" in doc:
            parts.append(f"config digest: {doc['config_digest']}")
        parts.append("")
    for name in ("correlation_report.txt", "timing.txt"):
        artifact = src / name
        if artifact.exists():
            parts.append(artifact.read_text())
    svg = src / "importance.svg"
    if svg.exists():
        parts.append(f"importance chart: {svg}")
    text = "\n".join(parts) + "\n"
    (src / "report.txt").write_text(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctiqa",
        description="Paired/unpaired image-quality metrics for CT denoising, "
                    "with correlation and importance studies.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("preprocess", help="window/resize rasters to .iqai")
    common(p)
    p.add_argument("--input", required=True, help="raster file or directory")
    p.add_argument("--domain", choices=("hu", "normalized"), default="hu",
                   help="intensity domain of CSV inputs")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("score", help="score a corpus into a metric table")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", default="all",
                   help="'all', 'paired', 'unpaired', or comma-separated names")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--peak-from-image", action="store_true",
                   help="PSNR peak = per-image maximum instead of the "
                        "configured dynamic range")
    p.add_argument("--patch-stride", type=int, default=None)
    p.add_argument("--raps-bins", type=int, default=None)
    p.add_argument("--niqe-patch", type=int, default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("correlate", help="correlation matrices and summary")
    common(p)
    p.add_argument("--table", required=True, help="metrics.json from 'score'")
    p.add_argument("--per-patient", action="store_true")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("importance", help="tree importances per paired metric")
    common(p)
    p.add_argument("--table", required=True)
    p.add_argument("--k", type=int, default=None, help="CV folds")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=None)
    p.add_argument("--min-impurity-decrease", type=float, default=None)
    p.add_argument("--by-patient", action="store_true")
    p.add_argument("--refit-final", action="store_true")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("bench", help="per-metric timing report")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", default="all")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--warmup", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="consolidate artifacts into report.txt")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
