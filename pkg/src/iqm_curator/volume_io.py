"""Volumetric image containers, NIfTI-1 I/O and training-time preprocessing.

Arrays are indexed ``data[x, y, z]``; flattening with ``order="F"`` gives the
x-fastest voxel order used on disk.
"""

from __future__ import annotations

import gzip
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, NiftiFormatError, UnsupportedDatatypeError

__all__ = [
    "Volume",
    "LabelVolume",
    "BinaryMask",
    "PatchPair",
    "SUPPORTED_DTYPES",
    "load_nifti",
    "save_nifti",
    "zscore_normalize",
    "resize",
    "resize_labels",
    "sample_patches",
    "combine_labels",
    "BRATS_LABELS",
    "WHOLE_TUMOR",
    "TUMOR_CORE",
    "ENHANCING_TUMOR",
]

BRATS_LABELS = frozenset({0, 1, 2, 4})
WHOLE_TUMOR = frozenset({1, 2, 4})
TUMOR_CORE = frozenset({1, 4})
ENHANCING_TUMOR = frozenset({4})


def _as_spacing(spacing) -> tuple[float, float, float]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3:
        raise ValueError(f"spacing needs 3 components, got {len(sp)}")
    if not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValueError(f"spacing components must be positive, got {sp}")
    return sp


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Volume:
    """Scalar 3D image with voxel spacing in mm."""

    id: str
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or 0 in data.shape:
            raise ValueError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.number) or np.issubdtype(data.dtype, np.complexfloating):
            raise TypeError(f"volume data must be real-valued, got {data.dtype}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    def with_data(self, data, spacing=None) -> "Volume":
        return Volume(self.id, data, self.spacing if spacing is None else spacing)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer label map; every voxel label must belong to ``labels``."""

    id: str
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    labels: frozenset = BRATS_LABELS

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or 0 in data.shape:
            raise ValueError(f"label data must be a non-empty 3D array, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise TypeError(f"label data must be integer typed, got {data.dtype}")
        labels = frozenset(int(v) for v in self.labels)
        if any(v < 0 for v in labels):
            raise ValueError("labels must be non-negative")
        present = set(np.unique(data).tolist())
        if not present <= labels:
            raise ValueError(f"labels {sorted(present - labels)} not in declared set {sorted(labels)}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data.astype(bool)))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def aligned_with(self, other) -> bool:
        return self.dims == tuple(other.dims) and np.allclose(self.spacing, other.spacing, rtol=1e-6, atol=0)


@dataclass(frozen=True, eq=False)
class PatchPair:
    origin: tuple[int, int, int]
    size: tuple[int, int, int]
    image: np.ndarray
    mask: np.ndarray


# ---------------------------------------------------------------------------
# NIfTI-1

# datatype code -> numpy dtype (byte order applied at read time)
SUPPORTED_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_CODE_FOR_DTYPE = {dt: code for code, dt in SUPPORTED_DTYPES.items()}

_HEADER_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]


def _header_dtype(byteorder: str) -> np.dtype:
    return np.dtype([(f[0], byteorder + f[1], *f[2:]) for f in _HEADER_FIELDS])


assert _header_dtype("<").itemsize == 348


def _open(path: Path, mode: str):
    if path.name.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_all(path: Path) -> bytes:
    try:
        with _open(path, "rb") as fh:
            return fh.read()
    except (EOFError, zlib.error, gzip.BadGzipFile) as exc:
        raise OSError(f"{path}: corrupt or truncated gzip stream ({exc})") from exc


def _parse_header(raw: bytes, path: Path):
    if len(raw) < 348:
        raise NiftiFormatError(f"{path}: file shorter than a NIfTI-1 header")
    for order in "<>":
        hdr = np.frombuffer(raw[:348], dtype=_header_dtype(order))[0]
        if int(hdr["sizeof_hdr"]) == 348:
            return hdr, order
    raise NiftiFormatError(f"{path}: sizeof_hdr is not 348 in either byte order")


def load_nifti(path, labels: Iterable[int] | None = None, image_id: str | None = None):
    """Read a single-file NIfTI-1 image (``.nii`` or ``.nii.gz``).

    Parameters
    ----------
    path : str or Path
      File to read.
    labels : iterable of int, optional
      Declared label set. When given and the on-disk datatype is an integer
      type, a :class:`LabelVolume` is returned instead of a :class:`Volume`.
    image_id : str, optional
      Identifier for the result; defaults to the file name stem.

    Returns
    -------
    Volume or LabelVolume

    Raises
    ------
    NiftiFormatError
      Bad magic or malformed header.
    UnsupportedDatatypeError
      Datatype other than uint8, int16, int32, float32, float64.
    OSError
      Missing file or truncated payload.
    """
    path = Path(path)
    raw = _read_all(path)
    hdr, order = _parse_header(raw, path)

    magic = bytes(hdr["magic"]).rstrip(b"\0")
    if magic == b"n+1":
        payload_src, offset = raw, int(hdr["vox_offset"])
        if offset < 348:
            raise NiftiFormatError(f"{path}: vox_offset {offset} inside the header")
    elif magic == b"ni1":
        # header/image pair: voxels live in the sibling .img file
        img_path = _pair_image_path(path)
        if img_path is None:
            raise NiftiFormatError(f"{path}: 'ni1' header without a companion .img file")
        payload_src, offset = _read_all(img_path), int(hdr["vox_offset"])
    else:
        raise NiftiFormatError(f"{path}: bad magic {magic!r}, expected b'n+1' or b'ni1'")

    code = int(hdr["datatype"])
    if code not in SUPPORTED_DTYPES:
        raise UnsupportedDatatypeError(f"{path}: unsupported NIfTI datatype code {code}")
    dtype = SUPPORTED_DTYPES[code].newbyteorder(order)

    ndim = int(hdr["dim"][0])
    if not 1 <= ndim <= 7:
        raise NiftiFormatError(f"{path}: invalid dim[0] = {ndim}")
    dims = [int(d) for d in hdr["dim"][1 : ndim + 1]]
    if any(d > 1 for d in dims[3:]):
        raise UnsupportedDatatypeError(f"{path}: only 3D images are supported, got dims {dims}")
    dims = (dims + [1, 1, 1])[:3]
    if any(d < 1 for d in dims):
        raise NiftiFormatError(f"{path}: non-positive dimension in {dims}")
    spacing = [abs(float(p)) for p in hdr["pixdim"][1:4]]
    spacing = [p if p > 0 else 1.0 for p in spacing]

    count = dims[0] * dims[1] * dims[2]
    nbytes = count * dtype.itemsize
    if len(payload_src) < offset + nbytes:
        raise OSError(f"{path}: truncated payload ({len(payload_src) - offset} of {nbytes} bytes)")
    data = np.frombuffer(payload_src, dtype=dtype, count=count, offset=offset)
    data = data.reshape(dims, order="F").astype(dtype.newbyteorder("="))

    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    scaled = np.isfinite(slope) and slope != 0 and not (slope == 1 and inter == 0)
    if scaled:
        data = data.astype(np.float64) * slope + (inter if np.isfinite(inter) else 0.0)

    if image_id is None:
        image_id = _stem(path)
    if labels is not None and np.issubdtype(data.dtype, np.integer):
        return LabelVolume(image_id, data, spacing, frozenset(labels))
    return Volume(image_id, data, spacing)


def _pair_image_path(path: Path):
    name = path.name
    for suffix in (".hdr.gz", ".hdr"):
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            for cand in (base + ".img", base + ".img.gz"):
                if (path.parent / cand).exists():
                    return path.parent / cand
    return None


def _stem(path: Path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii", ".hdr.gz", ".hdr"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(name).stem


def save_nifti(v, path, dtype=None) -> None:
    """Write a Volume or LabelVolume as single-file NIfTI-1.

    The array dtype is written as-is unless ``dtype`` is given; it must be one
    of the supported datatypes. ``.gz`` suffix selects gzip compression. The
    file is written to a temporary sibling and renamed into place.
    """
    path = Path(path)
    data = np.asarray(v.data)
    if dtype is not None:
        target = np.dtype(dtype)
        if target not in _CODE_FOR_DTYPE:
            raise UnsupportedDatatypeError(f"cannot write datatype {target}")
        if np.issubdtype(target, np.integer) and not np.issubdtype(data.dtype, np.integer):
            if not np.array_equal(data, np.round(data)):
                raise ValueError(f"non-integral values cannot be written as {target}")
        info = np.iinfo(target) if np.issubdtype(target, np.integer) else None
        if info is not None and (data.min() < info.min or data.max() > info.max):
            raise ValueError(f"values out of range for {target}")
        data = data.astype(target)
    elif data.dtype == np.bool_:
        data = data.astype(np.uint8)
    dt = data.dtype.newbyteorder("=")
    if dt not in _CODE_FOR_DTYPE:
        raise UnsupportedDatatypeError(f"cannot write datatype {data.dtype}; pass dtype=")

    hdr = np.zeros((), dtype=_header_dtype("<"))
    hdr["sizeof_hdr"] = 348
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *data.shape, 1, 1, 1, 1]
    hdr["datatype"] = _CODE_FOR_DTYPE[dt]
    hdr["bitpix"] = dt.itemsize * 8
    hdr["pixdim"] = [1.0, *v.spacing, 1.0, 1.0, 1.0, 1.0]
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["sform_code"] = 1
    hdr["srow_x"] = [v.spacing[0], 0, 0, 0]
    hdr["srow_y"] = [0, v.spacing[1], 0, 0]
    hdr["srow_z"] = [0, 0, v.spacing[2], 0]
    hdr["magic"] = b"n+1\0"
    payload = (
        hdr.tobytes()
        + b"\0\0\0\0"
        + np.asarray(data, dtype=dt.newbyteorder("<")).tobytes(order="F")
    )
    if path.name.endswith(".gz"):
        payload = gzip.compress(payload, mtime=0)
    atomic_write_bytes(path, payload)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# ---------------------------------------------------------------------------
# preprocessing


def zscore_normalize(v: Volume) -> Volume:
    """Shift and scale all voxels to zero mean and unit population std."""
    x = np.asarray(v.data, dtype=np.float64)
    mu = x.mean()
    sigma = x.std()
    if not sigma > 0:
        raise DegenerateInputError(f"volume {v.id!r} is constant; cannot z-score")
    out = (x - mu) / sigma
    # second pass absorbs rounding left by the first
    out -= out.mean()
    return v.with_data(out)


def _axis_weights(n_in: int, n_out: int):
    """Source indices and weights for voxel-centre aligned linear resampling."""
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    w = pos - lo
    return lo, hi, w


def _check_target(target_dims) -> tuple[int, int, int]:
    td = tuple(int(d) for d in target_dims)
    if len(td) != 3 or any(d <= 0 for d in td):
        raise ValueError(f"target dims must be 3 positive integers, got {target_dims}")
    return td


def resize(v: Volume, target_dims) -> Volume:
    """Trilinear resampling onto a ``target_dims`` grid.

    Output voxel ``i`` along an axis samples source index
    ``(i + 0.5) * n_in / n_out - 0.5`` clamped to ``[0, n_in - 1]``; spacing
    is scaled by ``n_in / n_out`` so the field of view is preserved.
    """
    td = _check_target(target_dims)
    out = np.asarray(v.data, dtype=np.float64)
    if td == v.dims:
        return v.with_data(out)
    for axis, (n_in, n_out) in enumerate(zip(v.dims, td)):
        if n_in == n_out:
            continue
        lo, hi, w = _axis_weights(n_in, n_out)
        shape = [1, 1, 1]
        shape[axis] = n_out
        w = w.reshape(shape)
        out = np.take(out, lo, axis=axis) * (1.0 - w) + np.take(out, hi, axis=axis) * w
    spacing = [s * n_in / n_out for s, n_in, n_out in zip(v.spacing, v.dims, td)]
    return Volume(v.id, out, spacing)


def resize_labels(lv: LabelVolume, target_dims) -> LabelVolume:
    """Nearest-neighbour resampling of a label map (never creates labels)."""
    td = _check_target(target_dims)
    out = np.asarray(lv.data)
    for axis, (n_in, n_out) in enumerate(zip(lv.dims, td)):
        if n_in == n_out:
            continue
        idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
        out = np.take(out, np.minimum(idx, n_in - 1), axis=axis)
    spacing = [s * n_in / n_out for s, n_in, n_out in zip(lv.spacing, lv.dims, td)]
    return LabelVolume(lv.id, out, spacing, lv.labels)


def sample_patches(v: Volume, m, n: int, size, seed: int) -> list[PatchPair]:
    """Cut ``n`` randomly placed cubic (or box) patches from image and mask.

    Origins are drawn with ``numpy.random.Generator(PCG64(seed))`` as a single
    ``integers(0, dims - size + 1, size=(n, 3))`` call, i.e. row ``i`` holds
    the (x, y, z) origin of patch ``i``. The generator choice is part of the
    public contract so that patch lists are reproducible across releases.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    size = (int(size),) * 3 if np.isscalar(size) else tuple(int(s) for s in size)
    if len(size) != 3 or any(s < 1 for s in size):
        raise ValueError(f"invalid patch size {size}")
    dims = np.array(v.dims)
    if tuple(m.dims) != v.dims:
        raise ValueError(f"mask dims {m.dims} differ from image dims {v.dims}")
    if np.any(np.array(size) > dims):
        raise ValueError(f"patch size {size} exceeds volume dims {v.dims}")
    rng = np.random.Generator(np.random.PCG64(seed))
    origins = rng.integers(0, dims - np.array(size) + 1, size=(n, 3))
    pairs = []
    for o in origins:
        sl = tuple(slice(int(a), int(a) + s) for a, s in zip(o, size))
        pairs.append(
            PatchPair(
                origin=tuple(int(a) for a in o),
                size=size,
                image=np.array(v.data[sl]),
                mask=np.array(m.data[sl]),
            )
        )
    return pairs


def combine_labels(lv: LabelVolume, label_set: Sequence[int] | Iterable[int]) -> BinaryMask:
    """Binary mask of voxels whose label is in ``label_set``."""
    labels = sorted({int(x) for x in label_set})
    if not labels:
        raise ValueError("label_set must not be empty")
    return BinaryMask(np.isin(lv.data, labels), lv.spacing)
