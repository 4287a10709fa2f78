"""Command-line entry point.

    iqx --manifest corpus.json --out-dir embeddings \
        --extractors lpips1,lpips2,inception --source denoised \
        --weights random:7

Runs the requested extractors over the manifest and writes one output
file per extractor into ``--out-dir`` (``<extractor>_<source>.iqae``
for tensor containers, ``paq2piq_<source>.csv`` for quality scores).
Prints each written path on success; prints ``error: ...`` to stderr
and exits 1 on failure.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import ExporterError
from .export import run_export
from .jobs import EXTRACTORS, SOURCES, job_for_directory


def _parse_layers(specs: list[str]) -> dict[str, tuple[str, ...]]:
    """Parse repeated ``--layers key=name1+name2`` options."""
    out: dict[str, tuple[str, ...]] = {}
    for spec in specs:
        key, sep, names = spec.partition("=")
        if not sep or not key or not names:
            raise ExporterError(
                f"--layers expects key=name1+name2..., got {spec!r}"
            )
        out[key] = tuple(n for n in names.split("+") if n)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iqx",
        description=(
            "Export CNN activation stacks, pooled patch features with "
            "class probabilities, and blind quality scores over a corpus "
            "manifest."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--manifest", required=True, help="corpus manifest JSON")
    parser.add_argument("--out-dir", required=True, help="output directory")
    parser.add_argument(
        "--extractors",
        default=",".join(EXTRACTORS),
        help=f"comma list from {{{','.join(EXTRACTORS)}}} (default: all)",
    )
    parser.add_argument(
        "--source", default="denoised", choices=SOURCES,
        help="manifest role the networks ingest",
    )
    parser.add_argument(
        "--weights", default="pretrained",
        help="'pretrained', 'random:<seed>', or a state-dict path",
    )
    parser.add_argument(
        "--layers", action="append", default=[], metavar="KEY=N1+N2",
        help="narrow one extractor's tap set, e.g. lpips1=relu1_2+relu2_2",
    )
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--patch-size", type=int, default=50)
    parser.add_argument("--patch-stride", type=int, default=25)
    parser.add_argument("--window-center", type=float, default=-500.0)
    parser.add_argument("--window-width", type=float, default=1400.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        extractors = tuple(
            e.strip() for e in args.extractors.split(",") if e.strip()
        )
        job = job_for_directory(
            manifest=args.manifest,
            extractors=extractors,
            out_dir=args.out_dir,
            source=args.source,
            layers=_parse_layers(args.layers),
            weights=args.weights,
            batch_size=args.batch_size,
            device=args.device,
            patch_size=args.patch_size,
            patch_stride=args.patch_stride,
            window_center=args.window_center,
            window_width=args.window_width,
        )
        written = run_export(job)
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in job.extractors:
        print(f"wrote {written[name]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
