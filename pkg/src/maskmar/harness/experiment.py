"""Training drivers and the evaluation protocol over held-out cases."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from maskmar import marf
from maskmar.classic import li_complete, nmar_complete
from maskmar.ctsim import fbp, mu_to_hu
from maskmar.errors import ConfigError, NumericalError, QualityWarning
from maskmar.gan import (
    ModelBundle,
    PairedSet,
    TrainResult,
    complete_projections,
    correct_sinograms,
    load_bundle,
    train_pc,
    train_sc,
    write_losses,
)
from maskmar.harness.config import LEARNED, ExperimentConfig
from maskmar.harness.dataset import Dataset, Placement
from maskmar.harness.metrics import SSIMParams, rmse, ssim

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("case", "method", "mask_size", "rmse_hu", "ssim", "trace_rmse")
AGGREGATE_COLUMNS = (
    "bin", "method", "n", "rmse_mean", "rmse_std", "ssim_mean", "ssim_std", "trace_rmse_mean", "trace_rmse_std"
)


@dataclass(frozen=True)
class MetricRow:
    case: int
    method: str
    mask_size: int
    rmse_hu: float
    ssim: float
    trace_rmse: float  # masked-region RMSE of the completed data (line-integral units)

    def __post_init__(self):
        for name in ("rmse_hu", "ssim", "trace_rmse"):
            if not math.isfinite(getattr(self, name)):
                raise NumericalError(f"case {self.case} {self.method}: {name} is not finite")
        if self.rmse_hu < 0 or self.trace_rmse < 0:
            raise NumericalError(f"case {self.case} {self.method}: negative RMSE")
        if not -1.0 <= self.ssim <= 1.0:
            raise NumericalError(f"case {self.case} {self.method}: SSIM {self.ssim} outside [-1, 1]")

    def as_csv(self) -> list:
        return [self.case, self.method, self.mask_size, repr(self.rmse_hu), repr(self.ssim), repr(self.trace_rmse)]


# -- training ----------------------------------------------------------------------------------


def model_dirs(out: str | os.PathLike) -> dict[str, Path]:
    out = Path(out)
    return {"pc": out / "models" / "pc", "sc": out / "models" / "sc"}


def run_train_pc(cfg: ExperimentConfig, ds: Dataset, out: str | os.PathLike, progress=None) -> TrainResult:
    m = cfg.pc
    dirs = model_dirs(out)
    res = train_pc(
        ds.pc_samples, m.train_config(cfg.seed), m.generator(residual=False), m.discriminator(),
        norm=ds.norm, checkpoint_dir=dirs["pc"], progress=progress,
    )
    write_losses(dirs["pc"].parent / "pc_losses.csv", res.history)
    return res


def sc_samples(ds: Dataset, pc: ModelBundle, max_samples: int, seed: int) -> PairedSet:
    """Sinograms of PC-completed training stacks paired with the metal-free sinograms."""
    xs, ys, ss = [], [], []
    for p in ds.train_placements:
        truth = ds.train_truth[p.phantom]
        trace = ds.trace(p)
        done = complete_projections(np.where(trace, 0.0, truth), trace, pc)
        for z in np.flatnonzero(trace.any(axis=(1, 2))):
            xs.append(done[z])
            ys.append(truth[z])
            ss.append(trace[z])
    if not xs:
        raise ConfigError("no training sinogram intersects an implant")
    idx = np.arange(len(xs))
    if len(idx) > max_samples:
        idx = np.sort(np.random.default_rng([seed, 5]).choice(idx, size=max_samples, replace=False))
    return PairedSet(np.stack([xs[i] for i in idx]), np.stack([ys[i] for i in idx]), np.stack([ss[i] for i in idx]))


def run_train_sc(cfg: ExperimentConfig, ds: Dataset, out: str | os.PathLike, progress=None) -> TrainResult:
    dirs = model_dirs(out)
    pc = load_bundle(dirs["pc"])
    data = sc_samples(ds, pc, cfg.sc.max_samples, cfg.seed)
    m = cfg.sc
    res = train_sc(
        data, m.train_config(cfg.seed), m.generator(residual=True), m.discriminator(),
        norm=ds.norm, checkpoint_dir=dirs["sc"], progress=progress,
    )
    write_losses(dirs["sc"].parent / "sc_losses.csv", res.history)
    return res


# -- evaluation ---------------------------------------------------------------------------------


@dataclass
class CaseResult:
    rows: list[MetricRow]
    slice_index: int
    images: dict[str, np.ndarray]  # HU slices through the implant, metal painted in


def _available_models(cfg: ExperimentConfig, model_root: Path, methods, skipped: list[str]):
    dirs = model_dirs(model_root)
    pc = sc = None
    wanted = [m for m in methods if m in LEARNED]
    if wanted:
        try:
            pc = load_bundle(dirs["pc"])
        except ConfigError as exc:
            for m in wanted:
                skipped.append(f"{m}: {exc}")
    if pc is not None and "PC+SC" in methods:
        try:
            sc = load_bundle(dirs["sc"])
        except ConfigError as exc:
            skipped.append(f"PC+SC: {exc}")
    active = [m for m in methods if not (m in LEARNED and pc is None) and not (m == "PC+SC" and sc is None)]
    return active, pc, sc


def evaluate_case(
    ds: Dataset,
    case: Placement,
    methods,
    pc: ModelBundle | None = None,
    sc: ModelBundle | None = None,
    metal_hu: float = 3000.0,
    ssim_params: SSIMParams = SSIMParams(),
) -> CaseResult:
    cfg = ds.cfg
    g, mu_w = cfg.geometry, cfg.physics.mu_water
    metal = ds.implant(case)
    trace = ds.trace(case)
    measured = ds.measure(case)
    truth = ds.test_truth[case.phantom]

    def recon(data):
        return mu_to_hu(fbp(data, ds.geom, g.size, g.pixel_size), mu_w)

    gt = recon(truth)
    affected = metal.any(axis=(1, 2))
    if not affected.any():
        affected = np.ones(g.slices, bool)
    uncorrected = recon(measured)
    completed: dict[str, np.ndarray] = {}
    for m in methods:
        if m == "input":
            completed[m] = measured
        elif m == "LI":
            completed[m] = li_complete(measured, trace)
        elif m == "NMAR":
            completed[m] = nmar_complete(measured, trace, uncorrected, ds.geom, pixel_size=g.pixel_size, mu_water=mu_w)
        elif m == "PC":
            completed[m] = complete_projections(measured, trace, pc)
        elif m == "PC+SC":
            base = completed["PC"] if "PC" in completed else complete_projections(measured, trace, pc)
            completed[m] = correct_sinograms(base, trace, sc)

    z = int(np.argmax(metal.sum(axis=(1, 2)))) if metal.any() else g.slices // 2
    gt_painted = np.where(metal, metal_hu, gt)
    rows, images = [], {"ground truth": gt_painted[z]}
    for m in methods:
        data = completed[m]
        img = uncorrected if m == "input" else recon(data)
        if not np.all(np.isfinite(img)):
            raise NumericalError(f"case {case.id}: {m} reconstruction is not finite")
        painted = np.where(metal, metal_hu, img)
        r = rmse(img[affected], gt[affected], metal=metal[affected])
        s = ssim(painted[affected], gt_painted[affected], ssim_params)
        t = rmse(data, truth, region=trace) if trace.any() else 0.0
        rows.append(MetricRow(case.id, m, case.mask_size, r, s, t))
        images[m] = painted[z]
    return CaseResult(rows, z, images)


@dataclass
class Report:
    rows: list[MetricRow]
    aggregates: list[list]
    skipped: list[str] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)

    def method_rows(self, method: str) -> list[MetricRow]:
        return [r for r in self.rows if r.method == method]

    def win_fraction(self, method: str, baseline: str, key: str = "trace_rmse") -> float:
        a = {r.case: getattr(r, key) for r in self.method_rows(method)}
        b = {r.case: getattr(r, key) for r in self.method_rows(baseline)}
        common = sorted(set(a) & set(b))
        if not common:
            return float("nan")
        return sum(a[c] < b[c] for c in common) / len(common)

    def mean(self, method: str, key: str = "trace_rmse") -> float:
        vals = [getattr(r, key) for r in self.method_rows(method)]
        return float(np.mean(vals)) if vals else float("nan")


def metrics_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def aggregate(rows: list[MetricRow], methods, ev) -> list[list]:
    """One row per (bin, method), empty bins included with n = 0."""
    labels = ev.bin_labels()
    out = []
    for b, label in enumerate(labels):
        for m in methods:
            sel = [r for r in rows if r.method == m and ev.bin_index(r.mask_size) == b]
            row = [label, m, len(sel)]
            for key in ("rmse_hu", "ssim", "trace_rmse"):
                v = np.array([getattr(r, key) for r in sel])
                row += [float(v.mean()), float(v.std())] if len(v) else [float("nan"), float("nan")]
            out.append(row)
    return out


def aggregates_csv(agg: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for row in agg:
        w.writerow(row[:3] + [repr(v) for v in row[3:]])
    return buf.getvalue()


def run_experiment(
    cfg: ExperimentConfig,
    dataset_dir: str | os.PathLike,
    model_root: str | os.PathLike,
    out_dir: str | os.PathLike,
    figures: bool = True,
) -> Report:
    """Evaluate every configured method on the held-out cases and write the report."""
    from maskmar.harness import report as render

    ds = Dataset(dataset_dir)
    out_dir = Path(out_dir)
    skipped: list[str] = []
    methods, pc, sc = _available_models(cfg, Path(model_root), cfg.eval.methods, skipped)
    for msg in skipped:
        warnings.warn(f"skipping {msg}", QualityWarning, stacklevel=2)
    if not methods:
        raise ConfigError("no evaluable method remains after skipping unavailable models")

    n_panels = cfg.eval.panels
    order = sorted(ds.test_cases, key=lambda c: (c.mask_size, c.id))
    pick = {order[int(i)].id for i in np.linspace(0, len(order) - 1, n_panels).round()} if n_panels > 0 else set()

    rows: list[MetricRow] = []
    panels = []
    for case in ds.test_cases:
        res = evaluate_case(ds, case, methods, pc, sc, cfg.eval.metal_hu)
        rows += res.rows
        if case.id in pick:
            panels.append((case, res))
    agg = aggregate(rows, methods, cfg.eval)
    rep = Report(rows, agg, skipped)

    files = [
        _write(out_dir / "metrics.csv", metrics_csv(rows)),
        _write(out_dir / "aggregates.csv", aggregates_csv(agg)),
        _write(out_dir / "summary.txt", summary_text(rep, methods, cfg)),
    ]
    if figures:
        files += render.size_curves(out_dir, agg, methods, cfg.eval)
        files += [render.case_panel(out_dir / "panels" / f"case_{c.id:03d}.png", c, r, cfg.eval) for c, r in panels]
    rep.files = files
    return rep


def _write(path: Path, text: str) -> Path:
    marf.atomic_write_text(path, text)
    return path


def summary_text(rep: Report, methods, cfg: ExperimentConfig) -> str:
    lines = [f"held-out cases: {len({r.case for r in rep.rows})}", f"methods: {', '.join(methods)}", ""]
    lines.append(f"{'method':<8} {'RMSE (HU)':>18} {'SSIM':>16} {'trace RMSE':>20}")
    for m in methods:
        sel = rep.method_rows(m)
        r = np.array([x.rmse_hu for x in sel])
        s = np.array([x.ssim for x in sel])
        t = np.array([x.trace_rmse for x in sel])
        lines.append(
            f"{m:<8} {r.mean():9.2f} +- {r.std():6.2f} {s.mean():7.4f} +- {s.std():6.4f} {t.mean():10.5f} +- {t.std():7.5f}"
        )
    lines.append("")
    if "PC" in methods and "LI" in methods:
        lines.append(f"PC beats LI (trace RMSE) on {100 * rep.win_fraction('PC', 'LI'):.1f}% of cases")
    if "PC" in methods and "PC+SC" in methods:
        lines.append(f"mean trace RMSE: PC {rep.mean('PC'):.6f}, PC+SC {rep.mean('PC+SC'):.6f}")
    for msg in rep.skipped:
        lines.append(f"skipped {msg}")
    return "\n".join(lines) + "\n"


def run_baseline(
    cfg: ExperimentConfig, dataset_dir: str | os.PathLike, out_dir: str | os.PathLike, methods=("LI", "NMAR")
) -> list[Path]:
    """Complete every held-out case with the classic methods and store the sinograms as MARF."""
    ds = Dataset(dataset_dir)
    out_dir = Path(out_dir)
    g = ds.cfg.geometry
    written = []
    for case in ds.test_cases:
        measured = ds.measure(case)
        trace = ds.trace(case)
        for m in methods:
            if m == "LI":
                done = li_complete(measured, trace)
            elif m == "NMAR":
                hu = mu_to_hu(fbp(measured, ds.geom, g.size, g.pixel_size), ds.cfg.physics.mu_water)
                done = nmar_complete(measured, trace, hu, ds.geom, pixel_size=g.pixel_size, mu_water=ds.cfg.physics.mu_water)
            else:
                raise ConfigError(f"baseline supports LI and NMAR, not {m!r}")
            path = out_dir / m / f"case_{case.id:03d}.marf"
            marf.save(path, done.astype(np.float32))
            written.append(path)
    return written
