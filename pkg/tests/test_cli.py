import csv

import pytest

from maskmar.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from maskmar.errors import QualityWarning

TINY_INI = """
[experiment]
seed = 5

[geometry]
size = 32
slices = 32
pixel_size = 4.0
views = 32
detectors = 32
detector_spacing = 4.0

[data]
train_phantoms = 2
test_phantoms = 2
train_implants_per_phantom = 2
views_per_implant = 2
test_implants_per_phantom = 2

[pc]
iterations = 3
batch_size = 4
generator_channels = 4, 8
discriminator_channels = 4, 8

[sc]
iterations = 2
batch_size = 4
generator_channels = 4, 8
discriminator_channels = 4, 8
max_samples = 8

[eval]
panels = 1
"""


@pytest.fixture(scope="module")
def tiny_ini(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.ini"
    path.write_text(TINY_INI)
    return path


@pytest.fixture(scope="module")
def pipeline(tiny_ini, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    base = ["--config", str(tiny_ini), "--out", str(out)]
    codes = {cmd: main([cmd, *base]) for cmd in ("simulate", "train-pc", "train-sc")}
    codes["baseline"] = main(["baseline", *base, "--method", "LI"])
    codes["eval"] = main(["eval", *base])
    return out, codes


def test_full_pipeline_exit_codes_and_layout(pipeline):
    out, codes = pipeline
    assert codes == dict.fromkeys(codes, EXIT_OK)
    assert (out / "dataset" / "config.ini").is_file()
    assert (out / "models" / "pc" / "manifest.ini").is_file()
    assert (out / "models" / "sc" / "manifest.ini").is_file()
    assert len(list((out / "baseline" / "LI").glob("case_*.marf"))) == 4
    assert not (out / "baseline" / "NMAR").exists()
    for name in ("metrics.csv", "aggregates.csv", "summary.txt", "rmse_vs_size.png", "ssim_vs_size.png"):
        assert (out / "report" / name).stat().st_size > 0


def test_eval_reports_every_method(pipeline):
    out, _ = pipeline
    with open(out / "report" / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["method"] for r in rows} == {"input", "LI", "NMAR", "PC", "PC+SC"}
    assert len(rows) == 4 * 5


def test_eval_method_flag_restricts_methods(pipeline, tiny_ini, tmp_path):
    out, _ = pipeline
    report = tmp_path / "r"
    # a second output root that shares the dataset but has no models
    report.mkdir()
    (report / "dataset").symlink_to(out / "dataset")
    with pytest.warns(QualityWarning, match="PC"):
        code = main(["eval", "--config", str(tiny_ini), "--out", str(report), "--method", "LI,PC"])
    assert code == EXIT_OK
    text = (report / "report" / "summary.txt").read_text()
    assert "methods: LI" in text and "skipped PC" in text


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[geometry]\nsize = huge\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "size" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["eval", "--out", str(tmp_path / "empty")]) == EXIT_CONFIG  # no dataset
    assert main(["eval", "--out", str(tmp_path / "empty"), "--method", "LI,magic"]) == EXIT_CONFIG
    assert main(["train-pc", "--out", str(tmp_path / "empty"), "--method", "LI"]) == EXIT_CONFIG


def test_argument_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--seed", "-4"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_numerical_failure_exits_3(pipeline, tiny_ini, monkeypatch):
    import maskmar.harness.experiment as exp
    from maskmar.errors import NumericalError

    def diverge(*a, **k):
        raise NumericalError("loss became nan")

    monkeypatch.setattr(exp, "train_pc", diverge)
    out, _ = pipeline
    assert main(["train-pc", "--config", str(tiny_ini), "--out", str(out)]) == EXIT_NUMERICAL


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "FAIL" not in text and "conv_transpose2d" in text and "generator loss" in text
