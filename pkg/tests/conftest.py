import gzip
import sys
import struct

import numpy as np
import pytest

from iqm_curator.phantom import PhantomSpec, generate

# datatype code, struct/numpy char, bitpix
NIFTI_CODES = {"uint8": (2, "B", 8), "int16": (4, "h", 16), "int32": (8, "i", 32),
               "float32": (16, "f", 32), "float64": (64, "d", 64)}


def write_nifti_bytes(values, dims, spacing=(1.0, 1.0, 1.0), dtype="float32", endian="<",
                      magic=b"n+1\0", slope=0.0, inter=0.0, datatype=None):
    """Hand-packed NIfTI-1 file, independent of the package's writer.

    ``values`` are given in x-fastest order.
    """
    code, ch, bitpix = NIFTI_CODES.get(dtype, (datatype, "f", 32))
    if datatype is not None:
        code = datatype
    e = endian
    hdr = b"".join([
        struct.pack(e + "i", 348),
        b"\0" * 10, b"\0" * 18,
        struct.pack(e + "i", 0), struct.pack(e + "h", 0), b"r", b"\0",
        struct.pack(e + "8h", 3, *dims, 1, 1, 1, 1),
        struct.pack(e + "3f", 0, 0, 0),
        struct.pack(e + "h", 0),
        struct.pack(e + "h", code),
        struct.pack(e + "h", bitpix),
        struct.pack(e + "h", 0),
        struct.pack(e + "8f", 1.0, *spacing, 1, 1, 1, 1),
        struct.pack(e + "f", 352.0),
        struct.pack(e + "f", slope),
        struct.pack(e + "f", inter),
        struct.pack(e + "h", 0), b"\0", b"\x02",
        struct.pack(e + "4f", 0, 0, 0, 0),
        struct.pack(e + "2i", 0, 0),
        b"\0" * 80, b"\0" * 24,
        struct.pack(e + "2h", 0, 0),
        struct.pack(e + "6f", 0, 0, 0, 0, 0, 0),
        struct.pack(e + "12f", *([0.0] * 12)),
        b"\0" * 16,
        magic,
    ])
    assert len(hdr) == 348
    payload = struct.pack(e + f"{len(values)}{ch}", *values)
    return hdr + b"\0\0\0\0" + payload


@pytest.fixture
def nifti_writer():
    return write_nifti_bytes


@pytest.fixture
def write_gz():
    def _w(path, raw):
        path.write_bytes(gzip.compress(raw))
        return path
    return _w


@pytest.fixture(scope="session")
def sphere_phantom():
    spec = PhantomSpec(dims=(64, 64, 48), radius=20, muF=100.0, sigmaF=0.0, muB=0.0, sigmaB=0.0, seed=0)
    return spec, *generate(spec)


def brute_dice(p, r):
    p = np.asarray(p, bool).ravel()
    r = np.asarray(r, bool).ravel()
    inter = sum(1 for a, b in zip(p, r) if a and b)
    n = int(p.sum()) + int(r.sum())
    return 1.0 if n == 0 else 2.0 * inter / n


def linear_percentile(values, q):
    """Linear interpolation between order statistics, written out by hand."""
    v = sorted(values)
    pos = (len(v) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def brute_hd95(p, r, spacing=(1.0, 1.0, 1.0)):
    """All-pairs O(|P||R|) 95th-percentile Hausdorff distance."""
    sp = np.asarray(spacing, float)
    a = np.argwhere(p) * sp
    b = np.argwhere(r) * sp
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return max(linear_percentile(d.min(axis=1), 95), linear_percentile(d.min(axis=0), 95))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
