"""Foreground/background partition of MR volumes and measurement patch placement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, ForegroundDetectionError, SliceSkipped
from .volume_io import BinaryMask, Volume

__all__ = [
    "ForegroundMask",
    "PatchSpec",
    "otsu_threshold",
    "detect_foreground",
    "largest_component",
    "place_patches",
    "patch_window",
]

NBINS = 256
_CONN26 = np.ones((3, 3, 3), dtype=bool)
_CONN8 = np.ones((3, 3), dtype=bool)
_BALL1 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True, eq=False)
class ForegroundMask(BinaryMask):
    """Tissue mask aligned to its source volume; background is the complement."""

    @property
    def slice_counts(self) -> np.ndarray:
        """Foreground pixel count of every axial (last-axis) slice."""
        return self.data.sum(axis=(0, 1))

    @property
    def background(self) -> np.ndarray:
        return ~self.data


@dataclass(frozen=True)
class PatchSpec:
    slice_index: int
    center: tuple[int, int]
    half_width: int = 2

    def window(self) -> tuple[slice, slice]:
        r, c = self.center
        hw = self.half_width
        return slice(r - hw, r + hw + 1), slice(c - hw, c + hw + 1)


def patch_window(img2d, spec: PatchSpec) -> np.ndarray:
    return np.asarray(img2d)[spec.window()]


def otsu_threshold(values, nbins: int = NBINS) -> float:
    """Otsu threshold on an ``nbins`` histogram spanning ``[min, max]``.

    The candidate after bin ``k`` splits the histogram into bins ``0..k`` and
    ``k+1..nbins-1``; class means use bin centres. The returned threshold is
    the upper edge of bin ``k`` for the maximising ``k`` (lowest ``k`` on
    ties), so foreground is ``values > threshold`` up to values sitting
    exactly on that edge.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise DegenerateInputError("no values to threshold")
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise DegenerateInputError("constant input has no Otsu threshold")
    counts, edges = np.histogram(x, bins=nbins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = counts.astype(np.float64)
    w0 = np.cumsum(counts)[:-1]
    w1 = x.size - w0
    s0 = np.cumsum(counts * centers)[:-1]
    s1 = np.dot(counts, centers) - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -np.inf)
    k = int(np.argmax(between))
    return float(edges[k + 1])


def largest_component(mask: np.ndarray, structure=_CONN26) -> np.ndarray:
    """Keep only the largest connected component (first in raster order on ties)."""
    labels, n = ndimage.label(mask, structure=structure)
    if n <= 1:
        return labels > 0
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def detect_foreground(v: Volume) -> ForegroundMask:
    """Otsu threshold, largest 26-connected component, closing, per-slice hole fill.

    Closing uses the radius-1 ball (6-neighbour cross) on a zero-padded copy
    so objects touching the volume border are not eroded. Holes are filled in
    every axial slice with 8-connected background flooding. The largest
    component is re-selected at the end, which guarantees a single 26-connected
    foreground.
    """
    x = np.asarray(v.data, dtype=np.float64)
    thr = otsu_threshold(x)
    fg = x > thr
    if not fg.any():
        raise ForegroundDetectionError(f"{v.id}: nothing above the Otsu threshold")
    fg = largest_component(fg)
    fg = ndimage.binary_closing(np.pad(fg, 1), structure=_BALL1)[1:-1, 1:-1, 1:-1]
    for z in range(fg.shape[2]):
        if fg[:, :, z].any():
            fg[:, :, z] = ndimage.binary_fill_holes(fg[:, :, z], structure=_CONN8)
    fg = largest_component(fg)
    if not fg.any():
        raise ForegroundDetectionError(f"{v.id}: empty foreground after post-processing")
    return ForegroundMask(fg, v.spacing)


def _clamp(c: int, hw: int, n: int) -> int:
    return int(min(max(c, hw), n - 1 - hw))


def place_patches(img2d, fg2d, half_width: int = 2, slice_index: int = 0):
    """Foreground and background measurement windows for one slice.

    The foreground window is centred on the rounded foreground centroid; the
    background window on the background pixel farthest (Euclidean) from any
    foreground pixel, smallest row then column on ties. Both centres are
    clamped so the full window lies inside the slice.

    Raises
    ------
    SliceSkipped
      Fewer than ``(2*half_width+1)**2`` foreground or background pixels, or
      the slice is smaller than one window.
    """
    fg = np.asarray(fg2d, dtype=bool)
    side = 2 * half_width + 1
    need = side * side
    if fg.ndim != 2 or fg.shape != np.shape(img2d):
        raise ValueError("image and mask slices must be congruent 2D arrays")
    if fg.shape[0] < side or fg.shape[1] < side:
        raise SliceSkipped(f"slice {fg.shape} smaller than a {side}x{side} window")
    n_fg = int(fg.sum())
    n_bg = fg.size - n_fg
    if n_fg < need or n_bg < need:
        raise SliceSkipped(f"{n_fg} foreground / {n_bg} background pixels, need {need} each")

    rows, cols = np.nonzero(fg)
    cr = int(np.floor(rows.mean() + 0.5))
    cc = int(np.floor(cols.mean() + 0.5))
    fg_spec = PatchSpec(
        slice_index,
        (_clamp(cr, half_width, fg.shape[0]), _clamp(cc, half_width, fg.shape[1])),
        half_width,
    )

    dist = ndimage.distance_transform_edt(~fg)
    br, bc = np.unravel_index(int(np.argmax(dist)), dist.shape)
    bg_spec = PatchSpec(
        slice_index,
        (_clamp(int(br), half_width, fg.shape[0]), _clamp(int(bc), half_width, fg.shape[1])),
        half_width,
    )
    return fg_spec, bg_spec
