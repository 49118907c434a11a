"""Reproducible train/test manifests: k-fold and IQM-ordered splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .iqm import METRICS, IqmVector

__all__ = [
    "Cohort",
    "SplitManifest",
    "STRATEGIES",
    "holdout_size",
    "kfold",
    "ascending_split",
    "descending_split",
    "trimmed_split",
    "iqm_split",
    "manifests_to_json",
    "manifest_from_dict",
]

STRATEGIES = ("kfold", "ascending", "descending", "trimmed")


@dataclass
class Cohort:
    """Per-image IQM vectors, optionally joined with segmentation scores."""

    iqms: dict[str, IqmVector]
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.iqms, (list, tuple)):
            rows = list(self.iqms)
            ids = [r.image_id for r in rows]
            if len(set(ids)) != len(ids):
                dup = sorted({i for i in ids if ids.count(i) > 1})
                raise ValueError(f"duplicate image ids: {dup}")
            self.iqms = {r.image_id: r for r in rows}

    @property
    def ids(self) -> list[str]:
        return sorted(self.iqms)

    def column(self, metric: str) -> dict[str, float]:
        if metric not in METRICS:
            raise KeyError(f"unknown metric {metric!r}")
        return {i: float(getattr(r, metric)) for i, r in self.iqms.items()}


@dataclass
class SplitManifest:
    """One train/test partition; field order is the JSON field order."""

    strategy: str
    metric: str | None
    k: int
    fold: int | None
    seed: int | None
    train: list[str]
    test: list[str]
    excluded: list[str] = field(default_factory=list)
    version: str = __version__

    def __post_init__(self):
        self.train = sorted(self.train)
        self.test = sorted(self.test)
        self.excluded = sorted(self.excluded)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "metric": self.metric,
            "k": self.k,
            "fold": self.fold,
            "seed": self.seed,
            "train": list(self.train),
            "test": list(self.test),
            "excluded": list(self.excluded),
            "version": self.version,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def manifest_from_dict(d: Mapping) -> SplitManifest:
    return SplitManifest(
        strategy=d["strategy"],
        metric=d.get("metric"),
        k=int(d["k"]),
        fold=d.get("fold"),
        seed=d.get("seed"),
        train=list(d["train"]),
        test=list(d["test"]),
        excluded=list(d.get("excluded", [])),
        version=d.get("version", __version__),
    )


def manifests_to_json(manifests: Sequence[SplitManifest]) -> str:
    return json.dumps([m.to_dict() for m in manifests], indent=2) + "\n"


def holdout_size(n: int, k: int) -> int:
    """``round(n / k)`` with halves rounded up."""
    return (2 * n + k) // (2 * k)


def kfold(ids: Sequence[str], k: int = 5, seed: int = 0) -> list[SplitManifest]:
    """Seeded k-fold partition.

    Ids are sorted, permuted with ``numpy.random.Generator(PCG64(seed))`` and
    cut into ``k`` contiguous folds whose sizes differ by at most one (the
    first ``n % k`` folds are one larger).
    """
    ids = sorted(ids)
    n = len(ids)
    if len(set(ids)) != n:
        raise ValueError("ids must be unique")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k = {k} exceeds cohort size {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = [ids[i] for i in rng.permutation(n)]
    folds = np.array_split(np.arange(n), k)
    out = []
    for i, idx in enumerate(folds):
        test = {order[j] for j in idx}
        out.append(
            SplitManifest("kfold", None, k, i, seed, [x for x in ids if x not in test], list(test))
        )
    return out


def _ranked(cohort, metric: str, descending: bool):
    values = cohort.column(metric) if isinstance(cohort, Cohort) else dict(cohort)
    excluded = sorted(i for i, v in values.items() if v is None or math.isnan(v))
    usable = [(float(v), i) for i, v in values.items() if i not in excluded]
    if len(usable) < 2:
        raise ValueError(f"fewer than 2 rows with a usable {metric!r} value")
    if descending:
        usable.sort(key=lambda t: (-t[0], t[1]))
    else:
        usable.sort()
    return [i for _, i in usable], excluded


def _sizes(n: int, k: int) -> int:
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    t = holdout_size(n, k)
    if not 1 <= t < n:
        raise ValueError(f"cannot hold out round({n}/{k}) = {t} of {n} rows")
    return t


def ascending_split(cohort, metric: str, k: int = 5) -> SplitManifest:
    """Smallest ``n - round(n/k)`` metric values train, the rest test.

    ``cohort`` is a :class:`Cohort` or a plain ``{image_id: value}`` mapping.
    Ties are ordered by ascending image id. Rows whose metric is missing are
    left out and listed under ``excluded``.
    """
    order, excluded = _ranked(cohort, metric, descending=False)
    t = _sizes(len(order), k)
    return SplitManifest("ascending", metric, k, None, None, order[:-t], order[-t:], excluded)


def descending_split(cohort, metric: str, k: int = 5) -> SplitManifest:
    """Largest metric values train; ties still ordered by ascending image id."""
    order, excluded = _ranked(cohort, metric, descending=True)
    t = _sizes(len(order), k)
    return SplitManifest("descending", metric, k, None, None, order[:-t], order[-t:], excluded)


def trimmed_split(cohort, metric: str, k: int = 5) -> SplitManifest:
    """Middle of the ranking trains; both tails test.

    With ``t = round(n/k)`` the bottom ``floor(t/2)`` and top ``ceil(t/2)``
    rows form the test set.
    """
    order, excluded = _ranked(cohort, metric, descending=False)
    n = len(order)
    t = _sizes(n, k)
    lo, hi = t // 2, t - t // 2
    test = order[:lo] + order[n - hi :]
    return SplitManifest("trimmed", metric, k, None, None, order[lo : n - hi], test, excluded)


def iqm_split(strategy: str, cohort, metric: str, k: int = 5) -> SplitManifest:
    funcs = {"ascending": ascending_split, "descending": descending_split, "trimmed": trimmed_split}
    if strategy not in funcs:
        raise ValueError(f"unknown IQM split strategy {strategy!r}")
    return funcs[strategy](cohort, metric, k)
