import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskmar.ctsim import ScanGeometry, metal_trace, radon
from maskmar.errors import ConfigError, QualityWarning, UsageError
from maskmar.masks import (
    BlobParams,
    build_metal_library,
    coverage,
    gen_blob_mask,
    implant_volume,
    load_metal_library,
    mask_pyramid,
    place_metal_mask,
    pyramid_sizes,
    random_placement,
)

K4S2P1 = (4, 2, 1)


def test_blob_zero_count_is_empty():
    assert not gen_blob_mask(32, 32, BlobParams(n_blobs=(0, 0)), seed=1).any()


def test_blob_seeded_determinism():
    a = gen_blob_mask(48, 40, seed=11)
    b = gen_blob_mask(48, 40, seed=11)
    assert a.shape == (40, 48)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gen_blob_mask(48, 40, seed=12))


def test_blob_invalid_params():
    with pytest.raises(UsageError):
        gen_blob_mask(8, 8, BlobParams(n_blobs=(3, 1)))
    with pytest.raises(UsageError):
        gen_blob_mask(8, 8, BlobParams(radius=(0.0, 0.1)))


def test_blob_mean_coverage_regression_bound():
    covs = np.array([coverage(gen_blob_mask(64, 64, seed=i)) for i in range(10_000)])
    assert 0.02 <= covs.mean() <= 0.25


def test_place_at_origin_identity():
    lib = build_metal_library(n=6)[2]
    out = place_metal_mask(lib, lib.shape, (0, 0))
    np.testing.assert_array_equal(out, lib)


def test_place_outside_canvas_warns_and_is_empty():
    lib = np.ones((3, 3), bool)
    with pytest.warns(QualityWarning):
        out = place_metal_mask(lib, (10, 10), (20, -5))
    assert not out.any()


def test_place_empty_library_mask_rejected():
    with pytest.raises(UsageError):
        place_metal_mask(np.zeros((3, 3), bool), (8, 8))


@settings(max_examples=60, deadline=None)
@given(r=st.integers(-12, 20), c=st.integers(-12, 20), seed=st.integers(0, 1000))
def test_place_clipping_only_shrinks(r, c, seed):
    lib = build_metal_library(n=8)[seed % 8]
    with np.testing.suppress_warnings() as sup:
        sup.filter(QualityWarning)
        out = place_metal_mask(lib, (16, 16), (r, c), seed=seed, flip=None)
    assert out.sum() <= lib.sum()


def test_random_placement_keeps_shape_on_canvas():
    rng = np.random.default_rng(0)
    lib = build_metal_library(n=4)[1]
    out = random_placement(lib, (64, 64), rng)
    assert out.sum() == lib.sum()


def test_bundled_library_loads_sorted():
    lib = load_metal_library()
    assert len(lib) >= 30
    assert all(m.dtype == bool and m.any() for m in lib)
    rebuilt = build_metal_library()
    for a, b in zip(lib, rebuilt):
        np.testing.assert_array_equal(a, b)


def test_implant_projection_is_view_independent_silhouette():
    # a solid of revolution about the center projects to the same trace at every view
    sil = build_metal_library(n=6)[3]
    vol = implant_volume(sil, 48, 32, z0=5, center_px=(0.0, 0.0))
    g = ScanGeometry(n_views=12, n_detectors=32, detector_spacing=1.0, angular_range=np.pi)
    tr = metal_trace(vol, g)
    widths = tr.sum(axis=2)  # (slices, views)
    assert np.all(widths.max(axis=1) - widths.min(axis=1) <= 2)
    assert tr[:5].sum() == 0 and tr[5 : 5 + sil.shape[0]].any(axis=(1, 2)).all()


def test_pyramid_hand_computed_corners():
    levels = mask_pyramid(np.ones((64, 64)), [K4S2P1])
    lvl = levels[0]
    assert lvl.shape == (32, 32)
    assert lvl[0, 0] == 9.0 / 16.0
    assert lvl[0, 5] == 12.0 / 16.0
    assert np.all(lvl[1:-1, 1:-1] == 1.0)


def test_pyramid_empty_mask():
    for lvl in mask_pyramid(np.zeros((64, 64)), [K4S2P1] * 4):
        assert not lvl.any()


def test_pyramid_sizes_and_errors():
    assert pyramid_sizes((64, 64), [K4S2P1] * 4) == [(32, 32), (16, 16), (8, 8), (4, 4)]
    with pytest.raises(ConfigError, match="layer 2"):
        mask_pyramid(np.ones((8, 8)), [K4S2P1, K4S2P1, (4, 2, 0)])


@settings(max_examples=40, deadline=None)
@given(
    a=arrays(bool, (32, 32), elements=st.booleans()),
    extra=arrays(bool, (32, 32), elements=st.booleans()),
)
def test_pyramid_range_and_monotonicity(a, extra):
    b = a | extra
    la = mask_pyramid(a, [K4S2P1] * 3)
    lb = mask_pyramid(b, [K4S2P1] * 3)
    for x, y in zip(la, lb):
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert np.all(y >= x)


def test_pyramid_batched():
    m = np.stack([np.ones((16, 16)), np.zeros((16, 16))])
    lv = mask_pyramid(m, [K4S2P1, K4S2P1])
    assert lv[1].shape == (2, 4, 4)
    assert lv[1][1].max() == 0.0
