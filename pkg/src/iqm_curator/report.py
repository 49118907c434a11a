"""Static HTML + SVG rendering of correlation, outlier and split-comparison tables.

All geometry is a plain linear map from data to pixels inside a fixed plot
frame, so point positions can be recomputed from the CSV inputs::

    px = PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * PLOT_WIDTH
    py = PLOT_TOP + PLOT_HEIGHT - (y - y_lo) / (y_hi - y_lo) * PLOT_HEIGHT

where ``[x_lo, x_hi]`` is :func:`axis_range` of the plotted values.
Coordinates are written with two decimals.
"""

from __future__ import annotations

import html
import math
from typing import Mapping, Sequence

import numpy as np

from .analytics import OutlierReport, SplitSummary
from .iqm import METRICS

__all__ = [
    "WIDTH",
    "HEIGHT",
    "PLOT_LEFT",
    "PLOT_TOP",
    "PLOT_WIDTH",
    "PLOT_HEIGHT",
    "axis_range",
    "to_px",
    "scatter_svg",
    "boxplot_svg",
    "bars_svg",
    "render_report",
]

WIDTH, HEIGHT = 320, 240
PLOT_LEFT, PLOT_TOP = 56, 28
PLOT_WIDTH, PLOT_HEIGHT = 248, 168

OUTLIER_COLOR = "#d62728"
MEAN_COLOR = "#1f77b4"
POINT_COLOR = "#555555"


def axis_range(values) -> tuple[float, float]:
    """Finite min/max of ``values``; a degenerate range is widened by 0.5."""
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return lo - 0.5, hi + 0.5
    return lo, hi


def to_px(value: float, lo: float, hi: float, start: float, length: float, flip: bool = False) -> float:
    frac = (value - lo) / (hi - lo)
    return start + (1.0 - frac) * length if flip else start + frac * length


def _n(x: float) -> str:
    return f"{x:.2f}"


def _header(title: str, kind: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" class="{kind}" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="16" text-anchor="middle" font-size="12">{html.escape(title)}</text>',
        f'<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" '
        'fill="none" stroke="#999"/>',
    ]


def _yticks(lo, hi) -> list[str]:
    out = []
    for v in (lo, (lo + hi) / 2, hi):
        py = to_px(v, lo, hi, PLOT_TOP, PLOT_HEIGHT, flip=True)
        out.append(f'<text x="{PLOT_LEFT - 4}" y="{_n(py + 3)}" text-anchor="end">{v:.3g}</text>')
    return out


def _xticks(lo, hi) -> list[str]:
    out = []
    base = PLOT_TOP + PLOT_HEIGHT + 12
    for v in (lo, (lo + hi) / 2, hi):
        px = to_px(v, lo, hi, PLOT_LEFT, PLOT_WIDTH)
        out.append(f'<text x="{_n(px)}" y="{base}" text-anchor="middle">{v:.3g}</text>')
    return out


def scatter_svg(xs, ys, ids, title: str, xlabel: str, ylabel: str, outliers=()) -> str:
    """Scatter of ``ys`` against ``xs``; ids in ``outliers`` are drawn red."""
    pts = [(float(x), float(y), i) for x, y, i in zip(xs, ys, ids) if math.isfinite(x) and math.isfinite(y)]
    xlo, xhi = axis_range([p[0] for p in pts])
    ylo, yhi = axis_range([p[1] for p in pts])
    flagged = set(outliers)
    parts = _header(title, "scatter")
    if not pts:
        parts.append(
            f'<text x="{PLOT_LEFT + PLOT_WIDTH / 2:.2f}" y="{PLOT_TOP + PLOT_HEIGHT / 2:.2f}" '
            'text-anchor="middle" fill="#999">no complete pairs</text>'
        )
    for x, y, i in pts:
        cx = to_px(x, xlo, xhi, PLOT_LEFT, PLOT_WIDTH)
        cy = to_px(y, ylo, yhi, PLOT_TOP, PLOT_HEIGHT, flip=True)
        cls, color = ("outlier", OUTLIER_COLOR) if i in flagged else ("point", POINT_COLOR)
        parts.append(
            f'<circle class="{cls}" data-id="{html.escape(i)}" cx="{_n(cx)}" cy="{_n(cy)}" r="3" '
            f'fill="{color}" fill-opacity="0.8"><title>{html.escape(i)}</title></circle>'
        )
    parts += _xticks(xlo, xhi) + _yticks(ylo, yhi)
    parts.append(
        f'<text x="{PLOT_LEFT + PLOT_WIDTH / 2:.2f}" y="{HEIGHT - 6}" text-anchor="middle">{html.escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="12" y="{PLOT_TOP + PLOT_HEIGHT / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {PLOT_TOP + PLOT_HEIGHT / 2:.2f})">{html.escape(ylabel)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def boxplot_svg(report: OutlierReport, values, ids) -> str:
    """Box (q1..q3, median), whiskers to the extreme in-fence values,
    outliers as red circles and the mean as a blue diamond."""
    pairs = [(float(v), i) for v, i in zip(values, ids) if math.isfinite(v)]
    lo, hi = axis_range([v for v, _ in pairs] + [report.q1, report.q3, report.mean])
    y = lambda v: to_px(v, lo, hi, PLOT_TOP, PLOT_HEIGHT, flip=True)  # noqa: E731
    cx = PLOT_LEFT + PLOT_WIDTH / 2
    half = PLOT_WIDTH / 6
    inside = [v for v, _ in pairs if report.lo <= v <= report.hi]
    w_lo = min(inside) if inside else report.q1
    w_hi = max(inside) if inside else report.q3
    parts = _header(report.iqm, "boxplot")
    parts += [
        f'<line class="whisker" x1="{_n(cx)}" y1="{_n(y(w_lo))}" x2="{_n(cx)}" y2="{_n(y(report.q1))}" stroke="black"/>',
        f'<line class="whisker" x1="{_n(cx)}" y1="{_n(y(report.q3))}" x2="{_n(cx)}" y2="{_n(y(w_hi))}" stroke="black"/>',
        f'<rect class="box" x="{_n(cx - half)}" y="{_n(y(report.q3))}" width="{_n(2 * half)}" '
        f'height="{_n(y(report.q1) - y(report.q3))}" fill="#eeeeee" stroke="black"/>',
        f'<line class="median" x1="{_n(cx - half)}" y1="{_n(y(report.q2))}" x2="{_n(cx + half)}" '
        f'y2="{_n(y(report.q2))}" stroke="black" stroke-width="2"/>',
    ]
    flagged = set(report.outlier_ids)
    for v, i in pairs:
        if i in flagged:
            parts.append(
                f'<circle class="outlier" data-id="{html.escape(i)}" cx="{_n(cx)}" cy="{_n(y(v))}" r="3" '
                f'fill="{OUTLIER_COLOR}"><title>{html.escape(i)}</title></circle>'
            )
    my = y(report.mean)
    parts.append(
        f'<polygon class="mean" points="{_n(cx)},{_n(my - 4)} {_n(cx + 4)},{_n(my)} '
        f'{_n(cx)},{_n(my + 4)} {_n(cx - 4)},{_n(my)}" fill="{MEAN_COLOR}"/>'
    )
    parts += _yticks(lo, hi)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bars_svg(summaries: Sequence[SplitSummary], field: str = "mean_dice", title: str = "Mean Dice") -> str:
    vals = [getattr(s, field) for s in summaries]
    finite = [v for v in vals if math.isfinite(v)]
    lo = min(0.0, min(finite)) if finite else 0.0
    hi = max(finite) if finite else 1.0
    if hi == lo:
        hi = lo + 1.0
    parts = _header(title, "bars")
    n = max(len(summaries), 1)
    slot = PLOT_WIDTH / n
    base = to_px(lo, lo, hi, PLOT_TOP, PLOT_HEIGHT, flip=True)
    for k, (s, v) in enumerate(zip(summaries, vals)):
        x = PLOT_LEFT + k * slot + slot * 0.15
        if math.isfinite(v):
            top = to_px(v, lo, hi, PLOT_TOP, PLOT_HEIGHT, flip=True)
            parts.append(
                f'<rect class="bar" data-label="{html.escape(s.label)}" x="{_n(x)}" y="{_n(top)}" '
                f'width="{_n(slot * 0.7)}" height="{_n(base - top)}" fill="{MEAN_COLOR}"/>'
            )
        parts.append(
            f'<text x="{_n(x + slot * 0.35)}" y="{PLOT_TOP + PLOT_HEIGHT + 12}" text-anchor="middle" '
            f'font-size="8">{html.escape(s.label)}</text>'
        )
    parts += _yticks(lo, hi)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _table(header, rows) -> str:
    head = "".join(f"<th>{html.escape(h)}</th>" for h in header)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in r) + "</tr>" for r in rows
    )
    return f"<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>"


def _g(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.4f}"


def render_report(
    correlations: Sequence[Mapping[str, str]],
    outliers: Sequence[OutlierReport],
    iqm_rows: Sequence,
    scores: Mapping[str, float],
    summaries: Sequence[SplitSummary] = (),
    provenance: Sequence[str] = (),
    score_name: str = "dice",
) -> tuple[str, dict[str, str]]:
    """Build the report HTML and the individual SVG documents.

    Returns ``(html_text, {file_name: svg_text})``. The HTML inlines every
    SVG, so it is self-contained; it contains no scripts and no external links.
    """
    by_iqm = {r["iqm"]: r for r in correlations}
    out_by_iqm = {o.iqm: o for o in outliers}
    ids = [r.image_id for r in iqm_rows]
    y = [float(scores.get(i, math.nan)) for i in ids]
    svgs: dict[str, str] = {}
    for m in METRICS:
        x = [float(getattr(r, m)) for r in iqm_rows]
        corr = by_iqm.get(m, {})
        r_txt = corr.get("r", "nan")
        title = f"{m} (r = {float(r_txt):.3f})" if r_txt not in ("", "nan") else f"{m} (r undefined)"
        flagged = out_by_iqm[m].outlier_ids if m in out_by_iqm else ()
        svgs[f"scatter_{m}.svg"] = scatter_svg(x, y, ids, title, m, score_name, flagged)
    for m in METRICS:
        if m in out_by_iqm:
            svgs[f"box_{m}.svg"] = boxplot_svg(out_by_iqm[m], [float(getattr(r, m)) for r in iqm_rows], ids)
    if summaries:
        svgs["splits_dice.svg"] = bars_svg(summaries, "mean_dice", "Mean Dice per split")
        svgs["splits_hd95.svg"] = bars_svg(summaries, "mean_hd95", "Mean HD95 (mm) per split")

    sections = ["<h1>IQM curation report</h1>"]
    if provenance:
        sections.append("<pre>" + html.escape("\n".join(provenance)) + "</pre>")
    sections.append("<h2>Correlation with segmentation score</h2>")
    sections.append(
        _table(
            ["iqm", "r", "n_pairs", "rank", "selected"],
            [[r.get(c, "") for c in ("iqm", "r", "n_pairs", "rank", "selected")] for r in correlations],
        )
    )
    sections.append('<div class="panels">' + "".join(svgs[f"scatter_{m}.svg"] for m in METRICS) + "</div>")
    if outliers:
        sections.append("<h2>Distributions (outliers red, mean blue)</h2>")
        sections.append(
            _table(
                ["iqm", "q1", "median", "q3", "lo", "hi", "mean", "outliers"],
                [[o.iqm, _g(o.q1), _g(o.q2), _g(o.q3), _g(o.lo), _g(o.hi), _g(o.mean), ", ".join(o.outlier_ids)]
                 for o in outliers],
            )
        )
        sections.append(
            '<div class="panels">' + "".join(v for k, v in svgs.items() if k.startswith("box_")) + "</div>"
        )
    if summaries:
        sections.append("<h2>Split comparison</h2>")
        sections.append(
            _table(
                ["split", "n", "mean dice", "mean hd95", "delta dice", "delta hd95"],
                [[s.label, s.n, _g(s.mean_dice), _g(s.mean_hd95), _g(s.delta_dice), _g(s.delta_hd95)]
                 for s in summaries],
            )
        )
        sections.append('<div class="panels">' + svgs["splits_dice.svg"] + svgs["splits_hd95.svg"] + "</div>")
    style = (
        "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}"
        "td,th{border:1px solid #ccc;padding:2px 6px;font-size:12px}"
        ".panels svg{margin:4px;border:1px solid #eee}"
    )
    doc = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>IQM curation report</title>"
        f"<style>{style}</style></head><body>\n" + "\n".join(sections) + "\n</body></html>\n"
    )
    return doc, svgs
