import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskmar.classic import li_complete
from maskmar.ctsim import fbp, mu_to_hu
from maskmar.errors import ConfigError, NumericalError, QualityWarning, UsageError
from maskmar.harness import (
    Dataset,
    ExperimentConfig,
    MetricRow,
    build_dataset,
    evaluate_case,
    parse_config,
    rmse,
    run_experiment,
    ssim,
)
from maskmar.harness.config import DataSection, EvalSection, GeometrySection, ModelSection
from maskmar.harness.experiment import aggregate, metrics_csv

# -- metrics ----------------------------------------------------------------------------------


def test_rmse_trivial_cases():
    x = np.random.default_rng(0).normal(0, 100, (16, 16))
    assert rmse(x, x) == 0.0
    assert rmse(x + 10.0, x) == pytest.approx(10.0, abs=1e-12)


def test_rmse_excludes_metal_by_default():
    x = np.zeros((8, 8))
    metal = np.zeros((8, 8), bool)
    metal[2:4, 2:4] = True
    a = np.where(metal, 3000.0, x + 5.0)
    b = np.where(metal, -7.0, x)
    assert rmse(a, b, metal=metal) == pytest.approx(5.0, abs=1e-12)


def test_rmse_errors():
    with pytest.raises(UsageError):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(UsageError):
        rmse(np.zeros((2, 2)), np.zeros((2, 2)), region=np.zeros((2, 2), bool))


@settings(max_examples=30, deadline=None)
@given(c1=st.floats(-5000, 5000), c2=st.floats(-5000, 5000))
def test_rmse_invariant_to_metal_constant(c1, c2):
    rng = np.random.default_rng(1)
    img, ref = rng.normal(0, 50, (24, 24)), rng.normal(0, 50, (24, 24))
    metal = np.zeros((24, 24), bool)
    metal[10:14, 5:9] = True
    assert rmse(np.where(metal, c1, img), ref, metal=metal) == rmse(np.where(metal, c2, img), ref, metal=metal)


@settings(max_examples=30, deadline=None)
@given(x=arrays(np.float64, (20, 20), elements=st.floats(-1000, 3000)))
def test_ssim_self_is_one(x):
    assert abs(ssim(x, x) - 1.0) <= 1e-9


def test_ssim_constant_images_and_ordering():
    c = np.full((16, 16), 40.0)
    assert ssim(c, c) == 1.0
    yy, xx = np.mgrid[:32, :32]
    x = 500 * np.sin(xx / 4.0) * np.cos(yy / 5.0)
    assert ssim(x, -x + 100.0) < ssim(x, x)
    assert -1.0 <= ssim(x, -x) <= 1.0


def test_ssim_stack_and_even_window():
    from maskmar.harness.metrics import SSIMParams

    x = np.random.default_rng(2).normal(0, 100, (3, 20, 20))
    assert abs(ssim(x, x) - 1.0) < 1e-12
    with pytest.raises(UsageError):
        ssim(x, x, SSIMParams(window=10))


# -- config ----------------------------------------------------------------------------------------


def test_config_defaults_and_round_trip():
    cfg = ExperimentConfig()
    assert cfg.eval.bins == (0.0, 200.0, 500.0, 1000.0, 2000.0, math.inf)
    assert cfg.data.n_pc_samples == 200
    again = parse_config(cfg.to_ini())
    assert again == cfg


def test_config_overrides_sections():
    text = """
    [experiment]
    seed = 9
    [geometry]
    size = 32   ; small
    [pc]
    generator_channels = 8, 16
    iterations = 5
    [eval]
    methods = LI, PC
    bins = 0, 100, inf
    [physics]
    photons = none
    """
    cfg = parse_config("\n".join(l.strip() for l in text.splitlines()))
    assert cfg.seed == 9 and cfg.geometry.size == 32
    assert cfg.pc.generator_channels == (8, 16) and cfg.pc.iterations == 5
    assert cfg.eval.methods == ("LI", "PC") and cfg.eval.bins == (0.0, 100.0, math.inf)
    assert cfg.physics.photons is None
    assert cfg.sc == ExperimentConfig().sc


@pytest.mark.parametrize(
    "text",
    [
        "[bogus]\nx = 1\n",
        "[geometry]\nsize = big\n",
        "[geometry]\ncolour = red\n",
        "[eval]\nmethods = LI, magic\n",
        "[eval]\nbins = 0, 500, 200\n",
        "[physics]\nspectrum = rainbow\n",
        "[data]\nmask_source = paint\n",
        "[experiment]\nseed = -1\n",
        "not an ini file",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_bins_are_half_open():
    ev = EvalSection()
    assert [ev.bin_index(v) for v in (0, 199, 200, 1999, 2000, 10**6)] == [0, 0, 1, 3, 4, 4]
    assert len(ev.bin_labels()) == 5


# -- dataset, evaluation ------------------------------------------------------------------------------

TINY = ExperimentConfig(
    seed=3,
    geometry=GeometrySection(size=32, slices=32, pixel_size=4.0, views=32, detectors=32, detector_spacing=4.0),
    data=DataSection(train_phantoms=2, test_phantoms=2, train_implants_per_phantom=2, views_per_implant=2,
                     test_implants_per_phantom=2, library=""),
    pc=ModelSection(iterations=3, batch_size=4, generator_channels=(4, 8), discriminator_channels=(4, 8)),
    sc=ModelSection(iterations=2, batch_size=4, generator_channels=(4, 8), discriminator_channels=(4, 8), max_samples=8),
    eval=EvalSection(panels=1),
)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    return build_dataset(TINY, root / "dataset")


def test_dataset_split_and_invariants(tiny_dataset):
    ds = tiny_dataset
    d = ds.pc_samples
    assert len(d) == 8
    assert np.array_equal(d.x[~d.s], d.y[~d.s])
    assert {p.phantom for p in ds.train_placements} == {0, 1}
    # the two splits come from different phantom draws
    for a in ds.train_truth:
        for b in ds.test_truth:
            assert not np.allclose(a, b, atol=1e-3)
    assert all(c.mask_size == int(ds.implant(c).sum()) for c in ds.test_cases)


def test_dataset_is_byte_identical_for_same_seed(tiny_dataset, tmp_path):
    other = build_dataset(TINY, tmp_path / "again")
    files = sorted(p.relative_to(tiny_dataset.root) for p in tiny_dataset.root.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(other.root) for p in other.root.rglob("*") if p.is_file())
    for f in files:
        assert (tiny_dataset.root / f).read_bytes() == (other.root / f).read_bytes(), f


def test_dataset_failure_leaves_nothing(tmp_path, monkeypatch):
    import maskmar.harness.dataset as dsmod

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(dsmod, "_metal_free", boom)
    with pytest.raises(OSError):
        build_dataset(TINY, tmp_path / "broken")
    assert list(tmp_path.iterdir()) == []


def test_missing_dataset_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        Dataset(tmp_path)


def test_input_method_on_empty_mask_is_perfect(tiny_dataset):
    ds = tiny_dataset
    case = replace(ds.test_cases[0], z0=10**6, mask_size=0)  # implant placed beyond the slab
    ph = replace(ds.cfg.physics, photons=None)
    ds_clean = Dataset(ds.root)
    ds_clean.cfg = replace(ds.cfg, physics=ph)
    res = evaluate_case(ds_clean, case, ["input"])
    (row,) = res.rows
    assert row.rmse_hu == pytest.approx(0.0, abs=1e-9) and row.ssim == pytest.approx(1.0, abs=1e-9)


def test_li_exact_on_affine_rows_propagates_through_fbp():
    from maskmar.ctsim import ScanGeometry

    g = ScanGeometry(n_views=32, n_detectors=32, detector_spacing=1.0, angular_range=np.pi)
    rng = np.random.default_rng(0)
    t = np.arange(32.0)
    sino = rng.uniform(0.1, 1, (32, 1)) * np.clip(16 - np.abs(t - 15.5), 0, None)[None, :] / 16
    trace = np.zeros(sino.shape, bool)
    trace[:, 4:9] = True  # the rows are affine across bins 3..9
    done = li_complete(sino, trace)
    a = mu_to_hu(fbp(done, g, 24))
    b = mu_to_hu(fbp(sino, g, 24))
    assert rmse(a, b) < 1.0


def test_metric_row_invariants():
    MetricRow(0, "LI", 10, 0.0, 1.0, 0.0)
    with pytest.raises(NumericalError):
        MetricRow(0, "LI", 10, -1.0, 0.5, 0.0)
    with pytest.raises(NumericalError):
        MetricRow(0, "LI", 10, 1.0, 1.5, 0.0)
    with pytest.raises(NumericalError):
        MetricRow(0, "LI", 10, float("nan"), 0.5, 0.0)


def test_aggregate_row_count_includes_empty_bins():
    rows = [MetricRow(i, m, s, 1.0, 0.9, 0.1) for i, s in enumerate((50, 300)) for m in ("LI", "NMAR")]
    agg = aggregate(rows, ("LI", "NMAR"), EvalSection())
    assert len(agg) == 5 * 2
    assert [r[2] for r in agg[:4]] == [1, 1, 1, 1]
    assert all(r[2] == 0 and math.isnan(r[3]) for r in agg[4:])


def test_experiment_skips_missing_models(tiny_dataset, tmp_path):
    cfg = replace(TINY, eval=replace(TINY.eval, methods=("input", "LI", "PC")))
    with pytest.warns(QualityWarning, match="PC"):
        rep = run_experiment(cfg, tiny_dataset.root, tmp_path / "nomodels", tmp_path / "report")
    assert {r.method for r in rep.rows} == {"input", "LI"}
    assert (tmp_path / "report" / "metrics.csv").read_text() == metrics_csv(rep.rows)
    assert len((tmp_path / "report" / "aggregates.csv").read_text().splitlines()) == 1 + 5 * 2
    assert (tmp_path / "report" / "rmse_vs_size.png").stat().st_size > 0
    assert len(list((tmp_path / "report" / "panels").glob("*.png"))) == 1
    assert "skipped PC" in (tmp_path / "report" / "summary.txt").read_text()
