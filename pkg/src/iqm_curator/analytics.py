"""Correlation of IQMs with segmentation scores, box-plot outliers, split summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import UndefinedCorrelationError
from .iqm import METRICS
from .tables import render_csv

__all__ = [
    "CorrelationEntry",
    "CorrelationReport",
    "OutlierReport",
    "SplitSummary",
    "pearson",
    "rank_iqms",
    "iqr_outliers",
    "outlier_table",
    "compare_splits",
    "CORRELATION_HEADER",
    "OUTLIER_HEADER",
]

CORRELATION_HEADER = ("iqm", "r", "n_pairs", "rank", "selected")
OUTLIER_HEADER = ("iqm", "q1", "q2", "q3", "lo", "hi", "mean", "outlier_ids")


def _pairwise(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    keep = ~(np.isnan(x) | np.isnan(y))
    return x[keep], y[keep]


def pearson(x, y) -> float:
    """Product-moment correlation after pairwise removal of ``nan`` entries.

    Raises
    ------
    ValueError
      Different lengths, or fewer than 3 complete pairs.
    UndefinedCorrelationError
      Either column is constant.
    """
    x, y = _pairwise(x, y)
    if x.size < 3:
        raise ValueError(f"need at least 3 complete pairs, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant column")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass
class CorrelationEntry:
    iqm: str
    r: float
    n_pairs: int
    rank: int | None
    selected: bool
    reason: str = ""


@dataclass
class CorrelationReport:
    entries: list[CorrelationEntry]

    def __getitem__(self, iqm: str) -> CorrelationEntry:
        for e in self.entries:
            if e.iqm == iqm:
                return e
        raise KeyError(iqm)

    @property
    def selected(self) -> list[str]:
        return [e.iqm for e in self.entries if e.selected]

    def to_csv(self, comments=()) -> str:
        rows = [
            (e.iqm, e.r, e.n_pairs, "" if e.rank is None else e.rank, e.selected) for e in self.entries
        ]
        return render_csv(CORRELATION_HEADER, rows, comments)


def rank_iqms(
    iqms: Mapping[str, Mapping[str, float]] | Sequence,
    scores: Mapping[str, float],
    top_k: int | None = 8,
    threshold: float | None = None,
    metrics: Sequence[str] = METRICS,
) -> CorrelationReport:
    """Correlate every IQM column with per-image scores and rank by |r|.

    Parameters
    ----------
    iqms : mapping or sequence
      ``{image_id: IqmVector-or-dict}`` or a sequence of IqmVector.
    scores : mapping
      ``{image_id: score}`` (typically Dice).
    top_k : int, optional
      Mark the ``top_k`` strongest IQMs as selected (default 8).
    threshold : float, optional
      Mark IQMs with ``|r| >= threshold`` instead; overrides ``top_k``.

    IQMs whose correlation is undefined keep ``r = nan``, no rank, and a
    ``reason``; they are listed after the ranked ones.
    """
    if not isinstance(iqms, Mapping):
        iqms = {row.image_id: row for row in iqms}
    ids = sorted(set(iqms) & set(scores))
    y = np.array([scores[i] for i in ids], dtype=np.float64)
    ranked, dropped = [], []
    for m in metrics:
        x = np.array([_get(iqms[i], m) for i in ids], dtype=np.float64)
        xp, _ = _pairwise(x, y) if ids else (np.empty(0), None)
        try:
            r = pearson(x, y)
        except (ValueError, UndefinedCorrelationError) as exc:
            dropped.append(CorrelationEntry(m, math.nan, int(xp.size), None, False, str(exc)))
            continue
        ranked.append(CorrelationEntry(m, r, int(xp.size), None, False))
    order = {m: i for i, m in enumerate(metrics)}
    ranked.sort(key=lambda e: (-abs(e.r), order[e.iqm]))
    for pos, e in enumerate(ranked, start=1):
        e.rank = pos
        if threshold is not None:
            e.selected = abs(e.r) >= threshold
        else:
            e.selected = top_k is not None and pos <= top_k
    return CorrelationReport(ranked + dropped)


def _get(row, name):
    if isinstance(row, Mapping):
        return row[name]
    return getattr(row, name)


@dataclass
class OutlierReport:
    iqm: str
    q1: float
    q2: float
    q3: float
    lo: float
    hi: float
    mean: float
    outlier_ids: list[str] = field(default_factory=list)


def iqr_outliers(values, ids, iqm: str = "") -> OutlierReport:
    """Tukey fences at 1.5 IQR with linearly interpolated quartiles."""
    v = np.asarray(values, dtype=np.float64).ravel()
    ids = list(ids)
    if v.size != len(ids):
        raise ValueError("values and ids differ in length")
    keep = ~np.isnan(v)
    vk = v[keep]
    if vk.size < 4:
        raise ValueError(f"need at least 4 non-missing values, got {vk.size}")
    q1, q2, q3 = (float(q) for q in np.percentile(vk, [25, 50, 75]))
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    flagged = sorted(i for i, x, k in zip(ids, v, keep) if k and (x < lo or x > hi))
    return OutlierReport(iqm, q1, q2, q3, lo, hi, math.fsum(vk) / vk.size, flagged)


def outlier_table(reports: Sequence[OutlierReport], comments=()) -> str:
    rows = [(r.iqm, r.q1, r.q2, r.q3, r.lo, r.hi, r.mean, ";".join(r.outlier_ids)) for r in reports]
    return render_csv(OUTLIER_HEADER, rows, comments)


@dataclass
class SplitSummary:
    label: str
    n: int
    mean_dice: float
    mean_hd95: float
    delta_dice: float
    delta_hd95: float


def _mean(vals) -> float:
    vals = [float(v) for v in vals if not math.isnan(float(v))]
    return math.fsum(vals) / len(vals) if vals else math.nan


def compare_splits(tables: Mapping[str, Sequence], baseline: str = "kfold") -> list[SplitSummary]:
    """Mean Dice / HD95 per score table and the difference to ``baseline``.

    ``tables`` maps a label such as ``"ascending:cjv"`` to a list of
    ScoreRow. The baseline row reports a delta of zero.
    """
    if baseline not in tables:
        raise KeyError(f"baseline table {baseline!r} not supplied")
    means = {}
    for label, rows in tables.items():
        rows = list(rows)
        if not rows:
            raise ValueError(f"score table {label!r} is empty")
        means[label] = (len(rows), _mean(r.dice for r in rows), _mean(r.hd95 for r in rows))
    _, bd, bh = means[baseline]
    return [
        SplitSummary(label, n, d, h, d - bd, h - bh) for label, (n, d, h) in means.items()
    ]
