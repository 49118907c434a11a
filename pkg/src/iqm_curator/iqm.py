"""The 13 per-image MR quality metrics.

Every metric is evaluated on each qualifying axial slice and the image value
is the arithmetic mean over slices where the metric is defined. Undefined
values are ``nan`` (the missing marker); they are never replaced by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import SliceSkipped
from .tables import read_csv_rows, render_csv
from .foreground import PatchSpec, detect_foreground, patch_window, place_patches
from .volume_io import BinaryMask, Volume

__all__ = [
    "METRICS",
    "MISSING",
    "CSV_HEADER",
    "SliceStats",
    "IqmVector",
    "slice_stats",
    "cjv",
    "snr",
    "cnr",
    "variation_metrics",
    "cpp",
    "psnr",
    "efc",
    "fber",
    "slice_metrics",
    "compute_iqm_vector",
    "aggregate",
    "write_iqm_csv",
    "read_iqm_csv",
]

METRICS = ("var", "cv", "cpp", "psnr", "snr1", "snr2", "snr3", "snr4", "cnr", "cvp", "cjv", "efc", "fber")
MISSING = float("nan")
CSV_HEADER = ("image_id", *METRICS, "slices_used")

MIN_FOREGROUND = 100
MIN_BACKGROUND = 25


def _ratio(num: float, den: float) -> float:
    if den == 0 or not (math.isfinite(num) and math.isfinite(den)):
        return MISSING
    return float(num / den)


@dataclass(frozen=True)
class SliceStats:
    muF: float
    sigmaF: float
    muB: float
    sigmaB: float
    muFp: float
    sigmaFp: float
    muBp: float
    sigmaBp: float
    nF: int


@dataclass(frozen=True)
class IqmVector:
    image_id: str
    var: float = MISSING
    cv: float = MISSING
    cpp: float = MISSING
    psnr: float = MISSING
    snr1: float = MISSING
    snr2: float = MISSING
    snr3: float = MISSING
    snr4: float = MISSING
    cnr: float = MISSING
    cvp: float = MISSING
    cjv: float = MISSING
    efc: float = MISSING
    fber: float = MISSING
    slices_used: int = 0

    def __getitem__(self, name: str) -> float:
        if name not in METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def missing(self) -> list[str]:
        return [m for m in METRICS if math.isnan(getattr(self, m))]


def slice_stats(
    img2d,
    fg2d,
    patches: tuple[PatchSpec, PatchSpec] | None = None,
    half_width: int = 2,
    min_fg: int = MIN_FOREGROUND,
    min_bg: int = MIN_BACKGROUND,
) -> SliceStats:
    """Population moments of foreground, background and the two patches.

    ``patches`` defaults to :func:`place_patches` on the slice. Raises
    :class:`SliceSkipped` for slices below the pixel-count minimums.
    """
    x = np.asarray(img2d, dtype=np.float64)
    fg = np.asarray(fg2d, dtype=bool)
    f = x[fg]
    b = x[~fg]
    if f.size < max(min_fg, 1) or b.size < max(min_bg, 1):
        raise SliceSkipped(f"{f.size} foreground / {b.size} background pixels")
    if patches is None:
        patches = place_patches(x, fg, half_width)
    fp = patch_window(x, patches[0])
    bp = patch_window(x, patches[1])
    return SliceStats(
        muF=float(f.mean()),
        sigmaF=float(f.std()),
        muB=float(b.mean()),
        sigmaB=float(b.std()),
        muFp=float(fp.mean()),
        sigmaFp=float(fp.std()),
        muBp=float(bp.mean()),
        sigmaBp=float(bp.std()),
        nF=int(f.size),
    )


def cjv(s: SliceStats) -> float:
    """Coefficient of joint variation, (sigmaF + sigmaB) / |muF - muB|."""
    return _ratio(s.sigmaF + s.sigmaB, abs(s.muF - s.muB))


def snr(kind: int, s: SliceStats) -> float:
    """Signal-to-noise ratio variant ``kind`` in 1..4.

    ====  =====================
    kind  definition
    ====  =====================
    1     sigmaF / sigmaB
    2     muFp / sigmaB
    3     muFp / sigmaFp
    4     muFp / sigmaBp
    ====  =====================
    """
    if kind == 1:
        return _ratio(s.sigmaF, s.sigmaB)
    if kind == 2:
        return _ratio(s.muFp, s.sigmaB)
    if kind == 3:
        return _ratio(s.muFp, s.sigmaFp)
    if kind == 4:
        return _ratio(s.muFp, s.sigmaBp)
    raise ValueError(f"SNR kind must be 1..4, got {kind}")


def cnr(s: SliceStats) -> float:
    return _ratio(s.muFp - s.muBp, s.sigmaBp)


def variation_metrics(s: SliceStats) -> tuple[float, float, float]:
    """Return ``(var, cv, cvp)`` of the foreground and foreground patch."""
    return s.sigmaF**2, _ratio(s.sigmaF, s.muF), _ratio(s.sigmaFp, s.muFp)


def cpp(img2d, fg2d) -> float:
    """Mean |x - mean of 8 neighbours| over foreground pixels (edge-clamped)."""
    x = np.asarray(img2d, dtype=np.float64)
    fg = np.asarray(fg2d, dtype=bool)
    if not fg.any():
        return MISSING
    p = np.pad(x, 1, mode="edge")
    h, w = x.shape
    acc = np.zeros_like(x)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                acc += p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    return float(np.abs(x - acc / 8.0)[fg].mean())


def foreground_median5(img2d, fg2d) -> np.ndarray:
    """5x5 median at each foreground pixel over foreground neighbours only.

    Windows are clipped at the slice border. Even neighbour counts take the
    mean of the two middle values.
    """
    x = np.asarray(img2d, dtype=np.float64)
    fg = np.asarray(fg2d, dtype=bool)
    masked = np.pad(np.where(fg, x, np.nan), 2, constant_values=np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(masked, (5, 5))[fg]
    windows = np.sort(windows.reshape(len(windows), 25), axis=1)  # nan sorts last
    n = np.count_nonzero(~np.isnan(windows), axis=1)
    rows = np.arange(len(windows))
    return 0.5 * (windows[rows, (n - 1) // 2] + windows[rows, n // 2])


def psnr(img2d, fg2d) -> float:
    """10 log10(max(F)^2 / MSE(F, median5(F))) over foreground pixels.

    The median filter only sees foreground values (see ``foreground_median5``)
    so the mask boundary does not register as noise.
    """
    x = np.asarray(img2d, dtype=np.float64)
    fg = np.asarray(fg2d, dtype=bool)
    if not fg.any():
        return MISSING
    f = x[fg]
    mse = float(np.mean((f - foreground_median5(x, fg)) ** 2))
    peak = float(np.max(f) ** 2)
    if mse == 0 or peak == 0:
        return MISSING
    return 10.0 * math.log10(peak / mse)


def efc(img2d, fg2d) -> float:
    """Entropy focus criterion normalised so a uniform foreground scores 1.

    With ``E = sqrt(sum x^2)`` over the N foreground pixels the raw entropy
    ``-sum (x/E) ln(x/E)`` is divided by its maximum ``sqrt(N) ln sqrt(N)``.
    Foregrounds holding negative values are shifted by their minimum first.
    """
    f = np.asarray(img2d, dtype=np.float64)[np.asarray(fg2d, dtype=bool)]
    n = f.size
    if n <= 1:
        return MISSING
    if f.min() == f.max():
        # uniform region: the entropy attains its maximum, exactly 1 after normalisation
        return 1.0 if f[0] != 0 else MISSING
    if f.min() < 0:
        f = f - f.min()
    energy = math.sqrt(math.fsum(f * f))
    if energy == 0:
        return MISSING
    p = f[f > 0] / energy
    raw = -math.fsum(p * np.log(p))
    half_log = 0.5 * math.log(n)
    return raw / (math.sqrt(n) * half_log)


def fber(img, fg) -> float:
    """median(F^2) / median(B^2); works on slices or whole volumes."""
    x = np.asarray(img, dtype=np.float64)
    m = np.asarray(fg, dtype=bool)
    f2 = x[m] ** 2
    b2 = x[~m] ** 2
    if f2.size == 0 or b2.size == 0:
        return MISSING
    return _ratio(float(np.median(f2)), float(np.median(b2)))


def slice_metrics(img2d, fg2d, half_width: int = 2, min_fg=MIN_FOREGROUND, min_bg=MIN_BACKGROUND,
                  slice_index: int = 0) -> dict[str, float]:
    """All 13 metrics for one slice; raises SliceSkipped if it does not qualify."""
    x = np.asarray(img2d, dtype=np.float64)
    fg = np.asarray(fg2d, dtype=bool)
    n_fg = int(fg.sum())
    if n_fg < min_fg or fg.size - n_fg < min_bg:
        raise SliceSkipped(f"slice {slice_index}: {n_fg} foreground / {fg.size - n_fg} background pixels")
    patches = place_patches(x, fg, half_width, slice_index)
    s = slice_stats(x, fg, patches, min_fg=min_fg, min_bg=min_bg)
    var, cv, cvp = variation_metrics(s)
    return {
        "var": var,
        "cv": cv,
        "cpp": cpp(x, fg),
        "psnr": psnr(x, fg),
        "snr1": snr(1, s),
        "snr2": snr(2, s),
        "snr3": snr(3, s),
        "snr4": snr(4, s),
        "cnr": cnr(s),
        "cvp": cvp,
        "cjv": cjv(s),
        "efc": efc(x, fg),
        "fber": fber(x, fg),
    }


def aggregate(image_id: str, per_slice: Iterable[dict[str, float]]) -> IqmVector:
    """Mean of each metric over the slices where it is defined.

    Uses an exactly rounded sum so the result does not depend on slice order.
    """
    rows = list(per_slice)
    out = {}
    for m in METRICS:
        vals = [r[m] for r in rows if not math.isnan(r[m])]
        out[m] = math.fsum(vals) / len(vals) if vals else MISSING
    return IqmVector(image_id, **out, slices_used=len(rows))


def compute_iqm_vector(
    v: Volume,
    mask: BinaryMask | np.ndarray | None = None,
    half_width: int = 2,
    min_fg: int = MIN_FOREGROUND,
    min_bg: int = MIN_BACKGROUND,
) -> IqmVector:
    """Compute the 13-metric vector of one volume.

    Parameters
    ----------
    v : Volume
      Input image.
    mask : BinaryMask or bool array, optional
      Foreground mask; :func:`detect_foreground` is used when omitted.
    half_width : int
      Patch half-width (window side ``2*half_width + 1``).
    min_fg, min_bg : int
      Per-slice pixel minimums for a slice to qualify.
    """
    if mask is None:
        fg = detect_foreground(v).data
    else:
        fg = np.asarray(getattr(mask, "data", mask), dtype=bool)
        if fg.shape != v.dims:
            raise ValueError(f"mask shape {fg.shape} differs from volume dims {v.dims}")
    x = np.asarray(v.data, dtype=np.float64)
    rows = []
    for z in range(x.shape[2]):
        try:
            rows.append(slice_metrics(x[:, :, z], fg[:, :, z], half_width, min_fg, min_bg, z))
        except SliceSkipped:
            continue
    return aggregate(v.id, rows)


def write_iqm_csv(rows: Iterable[IqmVector], comments: Iterable[str] = ()) -> str:
    """Render IQM rows as CSV text with the fixed lowercase header.

    ``comments`` become leading ``#`` lines (provenance); readers skip them.
    """
    body = [(r.image_id, *(getattr(r, m) for m in METRICS), r.slices_used) for r in rows]
    return render_csv(CSV_HEADER, body, comments)


def read_iqm_csv(text_or_path) -> list[IqmVector]:
    header, rows = read_csv_rows(text_or_path)
    missing = [c for c in CSV_HEADER if c not in header]
    if missing:
        raise ValueError(f"IQM table lacks columns {missing}")
    out = []
    for lineno, row in rows:
        try:
            out.append(
                IqmVector(
                    row["image_id"],
                    **{m: float(row[m]) for m in METRICS},
                    slices_used=int(row["slices_used"]),
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return out

