import gzip
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from iqm_curator.errors import DegenerateInputError, NiftiFormatError, UnsupportedDatatypeError
from iqm_curator.phantom import PhantomSpec, generate
from iqm_curator.volume_io import (
    BinaryMask,
    LabelVolume,
    Volume,
    combine_labels,
    load_nifti,
    resize,
    resize_labels,
    sample_patches,
    save_nifti,
    zscore_normalize,
)

SUPPORTED = ["uint8", "int16", "int32", "float32", "float64"]


# -- load / save ------------------------------------------------------------

def test_load_fixture_x_fastest(tmp_path, nifti_writer):
    p = tmp_path / "f.nii"
    p.write_bytes(nifti_writer(list(range(8)), (2, 2, 2), spacing=(1.5, 2.0, 3.0)))
    v = load_nifti(p)
    assert v.dims == (2, 2, 2)
    assert v.spacing == (1.5, 2.0, 3.0)
    assert v.id == "f"
    # x varies fastest on disk: value = x + 2y + 4z
    for x in range(2):
        for y in range(2):
            for z in range(2):
                assert v.data[x, y, z] == x + 2 * y + 4 * z
    np.testing.assert_array_equal(v.data.ravel(order="F"), np.arange(8))


@pytest.mark.parametrize("endian", ["<", ">"])
def test_load_both_byte_orders_and_gzip(tmp_path, nifti_writer, write_gz, endian):
    raw = nifti_writer(list(range(24)), (2, 3, 4), dtype="int16", endian=endian)
    v = load_nifti(write_gz(tmp_path / "g.nii.gz", raw))
    assert v.dims == (2, 3, 4)
    np.testing.assert_array_equal(v.data.ravel(order="F"), np.arange(24))


def test_scaling_applied(tmp_path, nifti_writer):
    p = tmp_path / "s.nii"
    p.write_bytes(nifti_writer([0, 1, 2, 3, 4, 5, 6, 7], (2, 2, 2), dtype="int16", slope=2.0, inter=-1.0))
    v = load_nifti(p)
    np.testing.assert_array_equal(v.data.ravel(order="F"), 2.0 * np.arange(8) - 1.0)


def test_bad_magic(tmp_path, nifti_writer):
    p = tmp_path / "bad.nii"
    p.write_bytes(nifti_writer(list(range(8)), (2, 2, 2), magic=b"xyz\0"))
    with pytest.raises(NiftiFormatError):
        load_nifti(p)


def test_unsupported_datatype(tmp_path, nifti_writer):
    p = tmp_path / "u.nii"
    p.write_bytes(nifti_writer(list(range(8)), (2, 2, 2), dtype="other", datatype=512))
    with pytest.raises(UnsupportedDatatypeError):
        load_nifti(p)


def test_truncated_payload(tmp_path, nifti_writer):
    raw = nifti_writer(list(range(64)), (4, 4, 4))
    p = tmp_path / "t.nii"
    p.write_bytes(raw[:-10])
    with pytest.raises(OSError):
        load_nifti(p)
    q = tmp_path / "t.nii.gz"
    q.write_bytes(gzip.compress(raw)[:-20])
    with pytest.raises(OSError):
        load_nifti(q)


def test_label_volume_when_labels_declared(tmp_path, nifti_writer):
    p = tmp_path / "lab.nii"
    p.write_bytes(nifti_writer([0, 1, 2, 4, 0, 0, 1, 4], (2, 2, 2), dtype="uint8"))
    lv = load_nifti(p, labels={0, 1, 2, 4})
    assert isinstance(lv, LabelVolume)
    assert isinstance(load_nifti(p), Volume)


@pytest.mark.parametrize("dtype", SUPPORTED)
@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
def test_round_trip_every_datatype(tmp_path, dtype, suffix):
    rng = np.random.default_rng(3)
    if dtype.startswith("float"):
        data = rng.normal(size=(5, 6, 7)).astype(dtype)
    else:
        info = np.iinfo(dtype)
        data = rng.integers(info.min, info.max, size=(5, 6, 7), endpoint=True).astype(dtype)
    v = Volume("x", data, (0.5, 1.25, 3.0))
    path = tmp_path / f"x{suffix}"
    save_nifti(v, path)
    w = load_nifti(path)
    assert w.dims == v.dims
    assert w.spacing == v.spacing
    assert w.data.dtype == np.dtype(dtype)
    np.testing.assert_array_equal(w.data, v.data)


def test_round_trip_phantom(tmp_path):
    vol, _ = generate(PhantomSpec(dims=(20, 22, 18), radius=6, seed=4))
    save_nifti(vol, tmp_path / "p.nii.gz")
    back = load_nifti(tmp_path / "p.nii.gz")
    assert np.array_equal(back.data, vol.data)


def test_written_file_readable_by_nibabel(tmp_path):
    nib = pytest.importorskip("nibabel")
    data = np.arange(60, dtype=np.float32).reshape(3, 4, 5)
    save_nifti(Volume("n", data, (1.0, 2.0, 0.5)), tmp_path / "n.nii.gz")
    img = nib.load(str(tmp_path / "n.nii.gz"))
    np.testing.assert_array_equal(np.asarray(img.dataobj), data)
    np.testing.assert_allclose(img.header.get_zooms(), (1.0, 2.0, 0.5))


def test_nibabel_written_file_loads(tmp_path):
    nib = pytest.importorskip("nibabel")
    data = np.arange(60, dtype=np.int16).reshape(3, 4, 5)
    nib.save(nib.Nifti1Image(data, np.diag([2.0, 1.0, 1.0, 1.0])), str(tmp_path / "n.nii"))
    v = load_nifti(tmp_path / "n.nii")
    np.testing.assert_array_equal(v.data, data)
    assert v.spacing == (2.0, 1.0, 1.0)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_save_to_read_only_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        with pytest.raises(OSError):
            save_nifti(Volume("x", np.zeros((2, 2, 2))), ro / "x.nii")
    finally:
        ro.chmod(0o700)


def test_save_to_missing_dir_is_io_error(tmp_path):
    with pytest.raises(OSError):
        save_nifti(Volume("x", np.zeros((2, 2, 2))), tmp_path / "nope" / "x.nii")


def test_volume_invariants():
    with pytest.raises(ValueError):
        Volume("x", np.zeros((2, 2, 2)), (1, 0, 1))
    with pytest.raises(ValueError):
        Volume("x", np.full((2, 2, 2), np.nan))
    v = Volume("x", np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1


# -- z-score ----------------------------------------------------------------

def test_zscore_two_values():
    data = np.zeros((2, 2, 2))
    data[1] = 2.0
    out = zscore_normalize(Volume("z", data))
    assert set(np.round(out.data.ravel(), 12)) == {-1.0, 1.0}


def test_zscore_fixed_point():
    rng = np.random.default_rng(0)
    v = zscore_normalize(Volume("z", rng.normal(5, 3, (10, 10, 10))))
    w = zscore_normalize(v)
    np.testing.assert_allclose(w.data, v.data, atol=1e-6)
    assert w.dims == v.dims and w.spacing == v.spacing


def test_zscore_constant():
    with pytest.raises(DegenerateInputError):
        zscore_normalize(Volume("c", np.ones((3, 3, 3))))


@settings(max_examples=60, deadline=None)
@given(
    shape=st.tuples(*[st.integers(1, 6)] * 3),
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(1e-3, 1e4),
    shift=st.floats(-1e4, 1e4),
)
def test_zscore_property(shape, seed, scale, shift):
    rng = np.random.default_rng(seed)
    data = shift + scale * rng.normal(size=shape)
    if data.std() == 0:
        return
    out = zscore_normalize(Volume("h", data)).data
    assert abs(out.mean()) < 1e-6
    assert abs(out.std() - 1) < 1e-6


# -- resize -----------------------------------------------------------------

def test_resize_identity():
    rng = np.random.default_rng(1)
    v = Volume("r", rng.normal(size=(5, 6, 7)), (1, 2, 3))
    w = resize(v, (5, 6, 7))
    np.testing.assert_array_equal(w.data, v.data)
    assert w.spacing == v.spacing


def test_resize_constant():
    w = resize(Volume("c", np.full((4, 5, 6), 3.5)), (9, 2, 13))
    assert w.dims == (9, 2, 13)
    np.testing.assert_allclose(w.data, 3.5, rtol=0, atol=1e-12)


def test_resize_spacing_rescaled():
    w = resize(Volume("c", np.zeros((4, 4, 4)), (1, 1, 2)), (8, 2, 4))
    assert w.spacing == (0.5, 2.0, 2.0)


def test_resize_ramp_matches_line():
    n_in, n_out = 8, 16
    ramp = np.arange(n_in, dtype=float) * 3.0 + 1.0
    data = np.broadcast_to(ramp[:, None, None], (n_in, 2, 2)).copy()
    w = resize(Volume("r", data), (n_out, 2, 2))
    # sample coordinate of output voxel i in source index space, clamped at edges
    coords = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    np.testing.assert_allclose(w.data[:, 0, 0], 3.0 * coords + 1.0, atol=1e-6)


def test_resize_matches_map_coordinates():
    rng = np.random.default_rng(5)
    src = rng.normal(size=(5, 7, 4))
    target = (9, 3, 6)
    w = resize(Volume("r", src), target)
    axes = [np.clip((np.arange(t) + 0.5) * s / t - 0.5, 0, s - 1) for s, t in zip(src.shape, target)]
    grid = np.meshgrid(*axes, indexing="ij")
    ref = ndimage.map_coordinates(src, grid, order=1, mode="nearest")
    np.testing.assert_allclose(w.data, ref, atol=1e-12)


def test_resize_rejects_zero_dim():
    with pytest.raises(ValueError):
        resize(Volume("r", np.zeros((2, 2, 2))), (0, 2, 2))


@settings(max_examples=50, deadline=None)
@given(
    shape=st.tuples(*[st.integers(1, 6)] * 3),
    target=st.tuples(*[st.integers(1, 9)] * 3),
    seed=st.integers(0, 1000),
)
def test_resize_labels_never_invents(shape, target, seed):
    rng = np.random.default_rng(seed)
    lv = LabelVolume("l", rng.choice([0, 1, 2, 4], size=shape).astype(np.uint8))
    out = resize_labels(lv, target)
    assert out.dims == target
    assert set(np.unique(out.data)) <= set(np.unique(lv.data))
    if target == shape:
        np.testing.assert_array_equal(out.data, lv.data)


# -- patches ----------------------------------------------------------------

def test_sample_patches_64_cube():
    v = Volume("p", np.zeros((192, 192, 192), dtype=np.float32))
    m = BinaryMask(np.zeros((192, 192, 192), bool))
    pairs = sample_patches(v, m, n=16, size=64, seed=11)
    assert len(pairs) == 16
    for p in pairs:
        assert p.image.shape == p.mask.shape == (64, 64, 64)
        assert all(0 <= o and o + 64 <= 192 for o in p.origin)


def test_sample_patches_deterministic_and_cut_together():
    rng = np.random.default_rng(0)
    v = Volume("p", rng.normal(size=(20, 18, 16)))
    m = BinaryMask(rng.random((20, 18, 16)) > 0.5)
    a = sample_patches(v, m, 5, 6, seed=3)
    b = sample_patches(v, m, 5, 6, seed=3)
    assert [p.origin for p in a] == [p.origin for p in b]
    for p in a:
        sl = tuple(slice(o, o + 6) for o in p.origin)
        np.testing.assert_array_equal(p.image, v.data[sl])
        np.testing.assert_array_equal(p.mask, m.data[sl])


def test_sample_patches_full_size_single_origin():
    v = Volume("p", np.zeros((4, 5, 6)))
    m = BinaryMask(np.zeros((4, 5, 6)))
    valid = [(x, y, z) for x in range(4 - 4 + 1) for y in range(5 - 5 + 1) for z in range(6 - 6 + 1)]
    assert valid == [(0, 0, 0)]
    pairs = sample_patches(v, m, 7, (4, 5, 6), seed=1)
    assert {p.origin for p in pairs} == set(valid)


def test_sample_patches_too_big():
    v = Volume("p", np.zeros((4, 5, 6)))
    with pytest.raises(ValueError):
        sample_patches(v, BinaryMask(np.zeros((4, 5, 6))), 1, 5, seed=0)


def test_sample_patches_bounds_many_configs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        dims = tuple(int(d) for d in rng.integers(1, 12, size=3))
        size = int(rng.integers(1, min(dims) + 1))
        n = int(rng.integers(1, 5))
        seed = int(rng.integers(0, 2**31))
        v = Volume("p", np.zeros(dims, dtype=np.uint8))
        m = BinaryMask(np.zeros(dims, bool))
        a = sample_patches(v, m, n, size, seed)
        b = sample_patches(v, m, n, size, seed)
        assert [p.origin for p in a] == [p.origin for p in b]
        for p in a:
            assert all(0 <= o <= d - size for o, d in zip(p.origin, dims))


# -- labels -----------------------------------------------------------------

def _brats_fixture():
    data = np.zeros((8, 8, 8), dtype=np.uint8)
    data[2:6, 2:6, 2:6] = 2
    data[3:5, 3:5, 3:5] = 1
    data[3, 3, 3] = 4
    return LabelVolume("b", data)


def test_combine_labels_regions():
    lv = _brats_fixture()
    whole = combine_labels(lv, {1, 2, 4})
    core = combine_labels(lv, {1, 4})
    assert whole.count() == 64
    assert core.count() == 8
    assert combine_labels(lv, {9}).count() == 0


def test_combine_labels_union_is_or():
    lv = _brats_fixture()
    for a, b in [({1}, {2}), ({1, 4}, {2}), ({0}, {4}), ({2}, {2, 4})]:
        u = combine_labels(lv, a | b).data
        np.testing.assert_array_equal(u, combine_labels(lv, a).data | combine_labels(lv, b).data)


def test_combine_labels_empty_set():
    with pytest.raises(ValueError):
        combine_labels(_brats_fixture(), set())


def test_nfbs_geometry_header(tmp_path, nifti_writer):
    # NFBS T1 images: 256 x 256 x 192 at 1 mm isotropic
    dims = (256, 256, 192)
    raw = nifti_writer([], dims, spacing=(1.0, 1.0, 1.0), dtype="uint8")
    p = tmp_path / "nfbs_like.nii.gz"
    p.write_bytes(gzip.compress(raw + bytes(256 * 256 * 192), compresslevel=1))
    v = load_nifti(p)
    assert v.dims == dims
    assert v.spacing == (1.0, 1.0, 1.0)
