"""Synthetic slab datasets: limb phantoms, implants, training shards and held-out cases."""
from __future__ import annotations

import csv
import io
import math
import os
import shutil
import tempfile
from dataclasses import astuple, dataclass, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from maskmar import marf
from maskmar.ctsim import ScanGeometry, metal_trace, random_limb_phantom, render_volume, simulate_metal_sinogram
from maskmar.errors import ConfigError
from maskmar.gan import Normalizer, PairedSet
from maskmar.harness.config import ExperimentConfig, parse_config
from maskmar.masks import BlobParams, gen_blob_mask, implant_volume, load_metal_library, write_metal_library

CONFIG_FILE = "config.ini"
TRAIN, TEST = 0, 1


@dataclass(frozen=True)
class Placement:
    """An implant: library silhouette ``silhouette`` revolved about (cx, cy) pixels, top at slice ``z0``."""

    id: int
    phantom: int
    silhouette: int
    z0: int
    cx: float
    cy: float
    noise_seed: int
    mask_size: int  # metal voxel count


def _placements_csv(rows: list[Placement]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(Placement)])
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])
    return buf.getvalue()


def _read_placements(path: Path) -> list[Placement]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(
            Placement(
                int(r["id"]), int(r["phantom"]), int(r["silhouette"]), int(r["z0"]),
                float(r["cx"]), float(r["cy"]), int(r["noise_seed"]), int(r["mask_size"]),
            )
        )
    return out


def blob_silhouettes(n: int, seed: int, width: int = 11, height: int = 32) -> list[np.ndarray]:
    """Cropped random blobs used as implant profiles when the mask source is ``blob``."""
    params = BlobParams(n_blobs=(1, 3), radius=(0.25, 0.5))
    out, k = [], 0
    while len(out) < n:
        m = gen_blob_mask(width, height, params, seed=[seed, k])
        k += 1
        if m.any():
            rows, cols = np.flatnonzero(m.any(1)), np.flatnonzero(m.any(0))
            out.append(m[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1])
    return out


def implant_silhouettes(cfg: ExperimentConfig) -> list[np.ndarray]:
    if cfg.data.mask_source == "blob":
        return blob_silhouettes(36, cfg.seed)
    return load_metal_library(cfg.data.library or None)


def _draw_placement(rng, pid, phantom, sils, cfg: ExperimentConfig) -> Placement:
    g = cfg.geometry
    k = int(rng.integers(len(sils)))
    h = sils[k].shape[0]
    z0 = int(rng.integers(0, max(g.slices - h, 0) + 1))
    r = cfg.data.placement_radius * 0.5 * g.size * math.sqrt(rng.random())
    phi = rng.uniform(0, 2 * math.pi)
    cx, cy = round(r * math.cos(phi), 3), round(r * math.sin(phi), 3)
    vol = implant_volume(sils[k], g.slices, g.size, z0, (cx, cy))
    return Placement(pid, phantom, k, z0, cx, cy, int(rng.integers(2**31)), int(vol.sum()))


class Dataset:
    """Read-only view of a dataset directory written by :func:`build_dataset`."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        cfg_path = self.root / CONFIG_FILE
        if not cfg_path.is_file():
            raise ConfigError(f"no dataset at {self.root} (missing {CONFIG_FILE}); run 'simulate' first")
        self.cfg = parse_config(cfg_path.read_text(), str(cfg_path))
        self.geom: ScanGeometry = self.cfg.geometry.scan()
        self.pixel_size = self.cfg.geometry.pixel_size
        self.silhouettes = load_metal_library(self.root / "silhouettes")
        self.train_placements = _read_placements(self.root / "train" / "implants.csv")
        self.test_cases = _read_placements(self.root / "test" / "cases.csv")

    @cached_property
    def train_truth(self) -> np.ndarray:
        return marf.load(self.root / "train" / "truth.marf").astype(np.float64)

    @cached_property
    def test_volumes(self) -> np.ndarray:
        return marf.load(self.root / "test" / "volumes.marf")

    @cached_property
    def test_truth(self) -> np.ndarray:
        return marf.load(self.root / "test" / "truth.marf")

    @cached_property
    def pc_samples(self) -> PairedSet:
        d = self.root / "train"
        return PairedSet(marf.load(d / "pc_x.marf"), marf.load(d / "pc_y.marf"), marf.load(d / "pc_s.marf") > 0.5)

    @cached_property
    def norm(self) -> Normalizer:
        n = self.root / "normalization.txt"
        lo, hi = (float(v) for v in n.read_text().split())
        return Normalizer(lo, hi)

    def implant(self, p: Placement) -> np.ndarray:
        g = self.cfg.geometry
        return implant_volume(self.silhouettes[p.silhouette], g.slices, g.size, p.z0, (p.cx, p.cy))

    def trace(self, p: Placement) -> np.ndarray:
        return metal_trace(self.implant(p), self.geom, self.pixel_size)

    def measure(self, p: Placement) -> np.ndarray:
        """Noisy polychromatic data of a held-out phantom with the implant inserted."""
        ph = self.cfg.physics
        return simulate_metal_sinogram(
            self.test_volumes[p.phantom], self.implant(p), self.geom, ph.bins, ph.photons,
            seed=p.noise_seed, pixel_size=self.pixel_size, metal_mu=ph.metal_mu,
        )


def _metal_free(vol: np.ndarray, cfg: ExperimentConfig, geom: ScanGeometry) -> np.ndarray:
    return simulate_metal_sinogram(
        vol, np.zeros(vol.shape, bool), geom, cfg.physics.bins, None, pixel_size=cfg.geometry.pixel_size
    )


def _phantoms(cfg: ExperimentConfig, split: int, n: int) -> np.ndarray:
    g = cfg.geometry
    vols = []
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, split, i])
        ells = random_limb_phantom(rng, g.size, g.pixel_size, g.slices, cfg.physics.mu_water)
        vols.append(render_volume(ells, g.slices, g.size, g.pixel_size))
    return np.stack(vols)


def build_dataset(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> Dataset:
    """Render phantoms, simulate data and write train/test shards to ``out_dir``.

    Phantoms are split before any sample is drawn, so no phantom feeds both
    shards. Everything derives from ``cfg.seed``; the same seed yields
    byte-identical files. Output is assembled in a temporary sibling
    directory and renamed into place, so a failure leaves nothing behind.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=out_dir.name + ".", dir=out_dir.parent))
    try:
        _write_dataset(cfg, tmp)
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return Dataset(out_dir)


def _write_dataset(cfg: ExperimentConfig, root: Path) -> None:
    geom = cfg.geometry.scan()
    g, d = cfg.geometry, cfg.data
    geom.check_image(g.size, g.size, g.pixel_size)
    sils = implant_silhouettes(cfg)
    write_metal_library(root / "silhouettes", sils)

    # training split
    # training volumes are only needed through their data, kept in single precision
    truth = np.stack([_metal_free(v, cfg, geom) for v in _phantoms(cfg, TRAIN, d.train_phantoms)]).astype(np.float32)
    rng = np.random.default_rng([cfg.seed, 2])
    placements, xs, ys, ss, index = [], [], [], [], []
    for ph in range(d.train_phantoms):
        for _ in range(d.train_implants_per_phantom):
            p = _draw_placement(rng, len(placements), ph, sils, cfg)
            placements.append(p)
            trace = metal_trace(implant_volume(sils[p.silhouette], g.slices, g.size, p.z0, (p.cx, p.cy)), geom, g.pixel_size)
            hit = np.flatnonzero(trace.any(axis=(0, 2)))
            views = rng.choice(hit, size=min(d.views_per_implant, len(hit)), replace=False)
            for v in sorted(int(v) for v in views):
                y = truth[ph][:, v, :].astype(np.float64)
                s = trace[:, v, :]
                xs.append(np.where(s, 0.0, y))
                ys.append(y)
                ss.append(s)
                index.append((len(index), p.id, v))
    marf.save(root / "train" / "truth.marf", truth)
    marf.save(root / "train" / "pc_x.marf", np.stack(xs))
    marf.save(root / "train" / "pc_y.marf", np.stack(ys))
    marf.save(root / "train" / "pc_s.marf", np.stack(ss).astype(np.float32))
    marf.atomic_write_text(root / "train" / "implants.csv", _placements_csv(placements))
    marf.atomic_write_text(
        root / "train" / "pc_samples.csv", "sample,implant,view\n" + "".join(f"{a},{b},{c}\n" for a, b, c in index)
    )
    norm = Normalizer.fit(truth.astype(np.float64))
    marf.atomic_write_text(root / "normalization.txt", f"{norm.lo!r} {norm.hi!r}\n")

    # held-out split
    vols = _phantoms(cfg, TEST, d.test_phantoms)
    marf.save(root / "test" / "volumes.marf", vols)
    marf.save(root / "test" / "truth.marf", np.stack([_metal_free(v, cfg, geom) for v in vols]))
    rng = np.random.default_rng([cfg.seed, 3])
    cases = [
        _draw_placement(rng, ph * d.test_implants_per_phantom + k, ph, sils, cfg)
        for ph in range(d.test_phantoms)
        for k in range(d.test_implants_per_phantom)
    ]
    marf.atomic_write_text(root / "test" / "cases.csv", _placements_csv(cases))
    marf.atomic_write_text(root / CONFIG_FILE, cfg.to_ini())
