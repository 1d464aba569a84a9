"""Figures for the evaluation report."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=110, metadata={"Software": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def size_curves(out_dir: Path, agg: list[list], methods, ev) -> list[Path]:
    """RMSE-vs-size and SSIM-vs-size line plots, one line per method, error bars = std."""
    labels = ev.bin_labels()
    x = np.arange(len(labels))
    paths = []
    for key, col, ylabel in (("rmse", 3, "RMSE (HU)"), ("ssim", 5, "SSIM")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for m in methods:
            rows = [r for r in agg if r[1] == m]
            mean = np.array([r[col] for r in rows], dtype=float)
            std = np.array([r[col + 1] for r in rows], dtype=float)
            ok = np.isfinite(mean)
            ax.errorbar(x[ok], mean[ok], yerr=std[ok], marker="o", capsize=3, label=m)
        ax.set_xticks(x, labels, rotation=20)
        ax.set_xlabel("metal size (voxels)")
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        paths.append(_save(fig, out_dir / f"{key}_vs_size.png"))
    return paths


def case_panel(path: Path, case, result, ev) -> Path:
    """Grid of HU slices: input, ground truth, then every other method, all in one display window."""
    names = ["input", "ground truth"] if "input" in result.images else ["ground truth"]
    names += [m for m in result.images if m not in names]
    lo = ev.window_center - ev.window_width / 2
    hi = ev.window_center + ev.window_width / 2
    metrics = {r.method: r for r in result.rows}
    fig, axes = plt.subplots(1, len(names), figsize=(2.2 * len(names), 2.6))
    for ax, name in zip(np.atleast_1d(axes), names):
        ax.imshow(result.images[name], cmap="gray", vmin=lo, vmax=hi)
        title = name
        if name in metrics:
            title += f"\n{metrics[name].rmse_hu:.0f} / {metrics[name].ssim:.3f}"
        ax.set_title(title, fontsize=8)
        ax.axis("off")
    fig.suptitle(f"case {case.id}, {case.mask_size} metal voxels, slice {result.slice_index}", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
