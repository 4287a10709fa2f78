"""Ring-chart SVG for cross-validated feature importances.

One clove (angular sector) per predicted paired metric; inside each
clove, concentric crown segments represent the unpaired features, the
most important feature outermost with thickness proportional to its
importance share.  The clove label carries the mean NRMSE in
parentheses.  Pure text templating; deterministic output.
"""
from __future__ import annotations

import math
from typing import Sequence

from .errors import DomainError
from .regression import ImportanceReport

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


def _pt(cx: float, cy: float, r: float, angle: float) -> tuple[float, float]:
    return cx + r * math.cos(angle), cy + r * math.sin(angle)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _crown_path(cx, cy, r_out, r_in, a0, a1) -> str:
    """Annular sector path from angle a0 to a1 (radians, a1 > a0)."""
    large = 1 if (a1 - a0) > math.pi else 0
    x0, y0 = _pt(cx, cy, r_out, a0)
    x1, y1 = _pt(cx, cy, r_out, a1)
    x2, y2 = _pt(cx, cy, r_in, a1)
    x3, y3 = _pt(cx, cy, r_in, a0)
    return (
        f"M {_fmt(x0)} {_fmt(y0)} "
        f"A {_fmt(r_out)} {_fmt(r_out)} 0 {large} 1 {_fmt(x1)} {_fmt(y1)} "
        f"L {_fmt(x2)} {_fmt(y2)} "
        f"A {_fmt(r_in)} {_fmt(r_in)} 0 {large} 0 {_fmt(x3)} {_fmt(y3)} Z"
    )


def render_importance_chart(reports: Sequence[ImportanceReport],
                            size: int = 720) -> str:
    """SVG document for a set of per-label importance reports.

    All reports must share the same feature set (one legend).
    """
    reports = list(reports)
    if not reports:
        raise DomainError("need at least one importance report")
    feature_names = reports[0].feature_names
    for rep in reports[1:]:
        if rep.feature_names != feature_names:
            raise DomainError("reports disagree on feature names")
    color = {name: PALETTE[i % len(PALETTE)]
             for i, name in enumerate(feature_names)}

    cx = size / 2.0
    cy = size / 2.0
    r_out = size * 0.32
    r_in = size * 0.10
    n = len(reports)
    span = 2.0 * math.pi / n
    gap = min(0.02, span / 8.0)

    legend_rows = (len(feature_names) + 2) // 3
    height = size + 28 * legend_rows + 20

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{height}" viewBox="0 0 {size} {height}">',
        f'<rect width="{size}" height="{height}" fill="white"/>',
        '<g font-family="Helvetica, Arial, sans-serif">',
    ]
    for i, rep in enumerate(reports):
        a0 = -math.pi / 2.0 + i * span + gap / 2.0
        a1 = -math.pi / 2.0 + (i + 1) * span - gap / 2.0
        ranked = sorted(range(len(feature_names)),
                        key=lambda j: (-rep.importances[j], j))
        radius = r_out
        ring = r_out - r_in
        for j in ranked:
            share = float(rep.importances[j])
            if share <= 0.0:
                continue
            inner = max(radius - share * ring, r_in)
            parts.append(
                f'<path d="{_crown_path(cx, cy, radius, inner, a0, a1)}" '
                f'fill="{color[feature_names[j]]}" stroke="white" '
                'stroke-width="1"/>'
            )
            radius = inner
        mid = (a0 + a1) / 2.0
        lx, ly = _pt(cx, cy, r_out + 0.055 * size, mid)
        anchor = "middle"
        if math.cos(mid) > 0.3:
            anchor = "start"
        elif math.cos(mid) < -0.3:
            anchor = "end"
        label = f"{rep.label} ({rep.mean_nrmse:.2f})"
        parts.append(
            f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-size="15" '
            f'text-anchor="{anchor}">{label}</text>'
        )
    # legend
    for j, name in enumerate(feature_names):
        row = j // 3
        col = j % 3
        x = 24 + col * (size // 3)
        y = size + 12 + row * 28
        parts.append(
            f'<rect x="{x}" y="{y}" width="16" height="16" '
            f'fill="{color[name]}"/>'
        )
        parts.append(
            f'<text x="{x + 22}" y="{y + 13}" font-size="14">{name}</text>'
        )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
