"""PNG export with a window/level sidecar, and 1-bit mask PNGs."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from maskmar.errors import UsageError
from maskmar.marf import atomic_write_text


def window_to_unit(values: np.ndarray, center: float, width: float) -> np.ndarray:
    if not width > 0:
        raise UsageError(f"window width must be > 0, got {width}")
    return np.clip((np.asarray(values, dtype=np.float64) - (center - width / 2.0)) / width, 0.0, 1.0)


def save_png(path: str | Path, values: np.ndarray, center: float, width: float, bits: int = 8) -> Path:
    """Write a grayscale PNG plus ``<path>.txt`` holding the window settings."""
    path = Path(path)
    unit = window_to_unit(values, center, width)
    if bits == 8:
        img = PILImage.fromarray(np.round(unit * 255).astype(np.uint8))
    elif bits == 16:
        img = PILImage.fromarray(np.round(unit * 65535).astype(np.uint16))
    else:
        raise UsageError(f"bits must be 8 or 16, got {bits}")
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)
    atomic_write_text(
        path.with_suffix(path.suffix + ".txt"),
        f"window_center = {center!r}\nwindow_width = {width!r}\nbits = {bits}\n",
    )
    return path


def load_png_window(path: str | Path) -> np.ndarray:
    """Invert :func:`save_png` (up to quantization and clipping)."""
    path = Path(path)
    meta = {}
    for line in path.with_suffix(path.suffix + ".txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = float(v)
    raw = np.asarray(PILImage.open(path), dtype=np.float64)
    full = 65535.0 if int(meta["bits"]) == 16 else 255.0
    c, w = meta["window_center"], meta["window_width"]
    return raw / full * w + (c - w / 2.0)


def save_mask_png(path: str | Path, mask: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path)
    return path


def load_mask_png(path: str | Path) -> np.ndarray:
    return np.asarray(PILImage.open(path).convert("1"), dtype=bool)
