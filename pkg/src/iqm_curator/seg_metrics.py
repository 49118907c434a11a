"""Segmentation agreement: Dice, 95th-percentile Hausdorff distance, BraTS regions."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import AlignmentError, LabelValidationError, PairingError, UndefinedDistanceError
from .tables import read_csv_rows, render_csv
from .volume_io import (
    BRATS_LABELS,
    ENHANCING_TUMOR,
    TUMOR_CORE,
    WHOLE_TUMOR,
    BinaryMask,
    LabelVolume,
    combine_labels,
    load_nifti,
)

__all__ = [
    "ScoreRow",
    "SCORES_HEADER",
    "dice",
    "hausdorff95",
    "directed_distances",
    "brats_region_scores",
    "score_pair",
    "evaluate_cohort",
    "pair_files",
    "write_scores_csv",
    "read_scores_csv",
]

SCORES_HEADER = ("image_id", "dice", "hd95", "dice_whole", "dice_core", "dice_enh", "flags")
NIFTI_SUFFIXES = (".nii.gz", ".nii")


@dataclass(frozen=True)
class ScoreRow:
    image_id: str
    dice: float
    hd95: float
    dice_whole: float = math.nan
    dice_core: float = math.nan
    dice_enh: float = math.nan
    flags: tuple[str, ...] = field(default=())


def _unpack(m, spacing=None):
    if isinstance(m, BinaryMask):
        return m.data, m.spacing
    data = np.asarray(m).astype(bool)
    return data, tuple(float(s) for s in (spacing or (1.0,) * data.ndim))


def _aligned(P, R, spacing=None):
    p, sp = _unpack(P, spacing)
    r, sr = _unpack(R, spacing)
    if p.shape != r.shape or not np.allclose(sp, sr, rtol=1e-6, atol=0):
        raise AlignmentError(f"masks differ: shape {p.shape} vs {r.shape}, spacing {sp} vs {sr}")
    return p, r, sp


def dice(P, R) -> float:
    """Dice similarity coefficient ``2|P & R| / (|P| + |R|)``.

    Two empty masks agree perfectly and score 1.0.
    """
    p, r, _ = _aligned(P, R)
    n_p = int(np.count_nonzero(p))
    n_r = int(np.count_nonzero(r))
    if n_p + n_r == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & r)) / (n_p + n_r)


def directed_distances(P, R, spacing=None) -> np.ndarray:
    """Distance (mm) from every voxel of P to the nearest voxel of R."""
    p, r, sp = _aligned(P, R, spacing)
    if not p.any() or not r.any():
        raise UndefinedDistanceError("distance to an empty mask is undefined")
    dt = ndimage.distance_transform_edt(~r, sampling=sp)
    return dt[p]


def hausdorff95(P, R, spacing=None) -> float:
    """Symmetric 95th-percentile Hausdorff distance over all non-zero voxels.

    Each direction takes the linearly interpolated 95th percentile of the
    point-to-set distances; the result is the larger of the two.
    """
    d_pr = directed_distances(P, R, spacing)
    d_rp = directed_distances(R, P, spacing)
    return float(max(np.percentile(d_pr, 95), np.percentile(d_rp, 95)))


def _check_labels(lv: LabelVolume):
    present = set(np.unique(lv.data).tolist())
    bad = present - BRATS_LABELS
    if bad:
        raise LabelValidationError(f"{lv.id}: labels {sorted(bad)} outside {{0, 1, 2, 4}}")


def brats_region_scores(pred: LabelVolume, gt: LabelVolume) -> tuple[float, float, float]:
    """Dice of whole tumour {1,2,4}, tumour core {1,4} and enhancing tumour {4}."""
    _check_labels(pred)
    _check_labels(gt)
    if pred.dims != gt.dims or not np.allclose(pred.spacing, gt.spacing, rtol=1e-6, atol=0):
        raise AlignmentError(f"{pred.id} and {gt.id} are not aligned")
    return tuple(
        dice(combine_labels(pred, region), combine_labels(gt, region))
        for region in (WHOLE_TUMOR, TUMOR_CORE, ENHANCING_TUMOR)
    )


def score_pair(image_id: str, pred, gt) -> ScoreRow:
    """Score one prediction against its reference.

    Label volumes whose values go beyond {0, 1} are treated as BraTS maps:
    ``dice``/``hd95`` then refer to the whole tumour and the region columns are
    filled. Empty masks are recorded in ``flags`` instead of raising.
    """
    labeled = isinstance(pred, LabelVolume) and isinstance(gt, LabelVolume) and (
        np.any(pred.data > 1) or np.any(gt.data > 1)
    )
    flags = []
    regions = (math.nan, math.nan, math.nan)
    if labeled:
        regions = brats_region_scores(pred, gt)
        P, R = combine_labels(pred, WHOLE_TUMOR), combine_labels(gt, WHOLE_TUMOR)
    else:
        P = BinaryMask(np.asarray(pred.data) != 0, pred.spacing)
        R = BinaryMask(np.asarray(gt.data) != 0, gt.spacing)
    d = dice(P, R)
    p_empty, r_empty = P.count() == 0, R.count() == 0
    if p_empty and r_empty:
        flags.append("both_empty")
    elif p_empty:
        flags.append("pred_empty")
    elif r_empty:
        flags.append("gt_empty")
    hd = math.nan if (p_empty or r_empty) else hausdorff95(P, R)
    return ScoreRow(image_id, d, hd, *regions, flags=tuple(flags))


def _default_rule(path: Path) -> str:
    name = path.name
    for suffix in NIFTI_SUFFIXES:
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _index(directory: Path, rule) -> dict[str, Path]:
    files = sorted(p for p in Path(directory).iterdir() if p.is_file() and p.name.endswith(NIFTI_SUFFIXES))
    by_id: dict[str, list[Path]] = {}
    for f in files:
        by_id.setdefault(rule(f), []).append(f)
    dupes = {k: v for k, v in by_id.items() if len(v) > 1}
    if dupes:
        names = [str(p) for v in dupes.values() for p in v]
        raise PairingError(f"ambiguous image ids in {directory}: {', '.join(names)}", names)
    return {k: v[0] for k, v in by_id.items()}


def pair_files(pred_dir, gt_dir, rule: Callable[[Path], str] | None = None) -> list[tuple[str, Path, Path]]:
    """Match predictions to references by image id; every file must pair."""
    rule = rule or _default_rule
    preds = _index(pred_dir, rule)
    gts = _index(gt_dir, rule)
    orphans = [str(preds[k]) for k in sorted(set(preds) - set(gts))]
    orphans += [str(gts[k]) for k in sorted(set(gts) - set(preds))]
    if orphans:
        raise PairingError("unpaired files: " + ", ".join(orphans), orphans)
    return [(k, preds[k], gts[k]) for k in sorted(preds)]


def _load_labels(path: Path, image_id: str):
    v = load_nifti(path, labels=range(256), image_id=image_id)
    if isinstance(v, LabelVolume):
        return v
    data = np.asarray(v.data)
    if not np.array_equal(data, np.round(data)) or data.min() < 0:
        raise LabelValidationError(f"{path}: mask values must be non-negative integers")
    return LabelVolume(image_id, data.astype(np.int32), v.spacing, frozenset(range(int(data.max()) + 1)))


def evaluate_cohort(pred_dir, gt_dir, rule=None, threads: int | None = None) -> list[ScoreRow]:
    """One :class:`ScoreRow` per matched pair, ordered by image id."""
    pairs = pair_files(pred_dir, gt_dir, rule)

    def run(item):
        image_id, p, g = item
        return score_pair(image_id, _load_labels(p, image_id), _load_labels(g, image_id))

    if threads == 1 or len(pairs) <= 1:
        return [run(it) for it in pairs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(run, pairs))


def write_scores_csv(rows, comments=()) -> str:
    body = [
        (r.image_id, r.dice, r.hd95, r.dice_whole, r.dice_core, r.dice_enh, ";".join(r.flags))
        for r in rows
    ]
    return render_csv(SCORES_HEADER, body, comments)


def read_scores_csv(text_or_path) -> list[ScoreRow]:
    header, rows = read_csv_rows(text_or_path)
    for col in ("image_id", "dice"):
        if col not in header:
            raise ValueError(f"scores table lacks column {col!r}")
    out = []
    for lineno, row in rows:
        try:
            out.append(
                ScoreRow(
                    row["image_id"],
                    float(row["dice"]),
                    float(row.get("hd95", "nan") or "nan"),
                    *(float(row.get(c, "nan") or "nan") for c in ("dice_whole", "dice_core", "dice_enh")),
                    flags=tuple(f for f in row.get("flags", "").split(";") if f),
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return out
