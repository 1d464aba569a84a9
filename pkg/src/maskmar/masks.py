"""Blob masks, the metal silhouette library, mask placement and mask pyramids."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.path import Path as MplPath

from maskmar.autodiff import ConvSpec, Tensor, avg_pool2d, conv_output_size
from maskmar.errors import ConfigError, QualityWarning, UsageError

# -- blobs -------------------------------------------------------------------------


@dataclass(frozen=True)
class BlobParams:
    n_blobs: tuple[int, int] = (1, 4)  # inclusive range
    radius: tuple[float, float] = (0.04, 0.14)  # fraction of min(width, height)
    irregularity: float = 0.45
    n_vertices: int = 14


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def gen_blob_mask(width: int, height: int, params: BlobParams = BlobParams(), seed=None) -> np.ndarray:
    """Union of random smoothed star-polygons, rasterized then dilated by one pixel."""
    lo, hi = params.n_blobs
    if lo < 0 or hi < lo:
        raise UsageError(f"invalid n_blobs range {params.n_blobs}")
    rlo, rhi = params.radius
    if not 0 < rlo <= rhi:
        raise UsageError(f"invalid radius range {params.radius}")
    rng = np.random.default_rng(seed)
    mask = np.zeros((height, width), dtype=bool)
    n = int(rng.integers(lo, hi + 1))
    if n == 0:
        return mask
    yy, xx = np.mgrid[:height, :width]
    pts = np.column_stack([xx.ravel() + 0.5, yy.ravel() + 0.5])
    scale = min(width, height)
    nv = params.n_vertices
    for _ in range(n):
        r0 = rng.uniform(rlo, rhi) * scale
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        ang = np.sort(rng.uniform(0, 2 * np.pi, nv))
        noise = rng.uniform(-1, 1, nv)
        noise = (np.roll(noise, 1) + 2 * noise + np.roll(noise, -1)) / 4  # circular smoothing
        rad = r0 * np.clip(1 + params.irregularity * noise, 0.2, None)
        poly = np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])
        mask |= MplPath(poly).contains_points(pts).reshape(height, width)
    return _dilate(mask)


# -- placement ------------------------------------------------------------------------


def place_metal_mask(
    library_mask: np.ndarray,
    target_size: tuple[int, int],
    position: tuple[int, int] = (0, 0),
    seed=None,
    flip: bool | None = False,
) -> np.ndarray:
    """Embed ``library_mask`` with its top-left corner at ``position`` (row, col).

    ``flip=None`` draws random horizontal/vertical flips from ``seed``.
    Parts falling outside the canvas are clipped.
    """
    lib = np.asarray(library_mask, dtype=bool)
    if not lib.any():
        raise UsageError("library mask is empty")
    if flip is None:
        rng = np.random.default_rng(seed)
        if rng.random() < 0.5:
            lib = lib[:, ::-1]
        if rng.random() < 0.5:
            lib = lib[::-1, :]
    elif flip:
        lib = lib[:, ::-1]
    h, w = target_size
    out = np.zeros((h, w), dtype=bool)
    r0, c0 = position
    lh, lw = lib.shape
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + lh, h), min(c0 + lw, w)
    if rs >= re or cs >= ce:
        warnings.warn(f"mask placed at {position} lies entirely outside a {target_size} canvas", QualityWarning, stacklevel=2)
        return out
    out[rs:re, cs:ce] = lib[rs - r0 : re - r0, cs - c0 : ce - c0]
    return out


def random_placement(library_mask: np.ndarray, target_size: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Place at a uniformly random position keeping the whole shape on the canvas when possible."""
    lh, lw = library_mask.shape
    h, w = target_size
    r0 = int(rng.integers(0, max(h - lh, 0) + 1))
    c0 = int(rng.integers(0, max(w - lw, 0) + 1))
    return place_metal_mask(library_mask, target_size, (r0, c0), seed=int(rng.integers(2**31)), flip=None)


# -- metal silhouette library -------------------------------------------------------------


def _crop(mask: np.ndarray) -> np.ndarray:
    rows, cols = np.flatnonzero(mask.any(1)), np.flatnonzero(mask.any(0))
    return mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def _silhouette(kind: str, rng: np.random.Generator, max_h: int, max_w: int) -> np.ndarray:
    """A vertical, left-right symmetric implant profile (rows = long axis)."""
    h = int(rng.integers(max(6, max_h // 4), max_h + 1))
    half = np.zeros(h)
    wmax = max_w / 2.0
    z = np.arange(h)
    if kind == "screw":
        core = rng.uniform(0.3, 0.5) * wmax
        pitch = int(rng.integers(2, 4))
        half[:] = core + (z % pitch == 0) * rng.uniform(0.5, 1.5)
        head = int(rng.integers(2, 4))
        half[:head] = rng.uniform(0.75, 1.0) * wmax
        tip = min(h // 4, 4)
        half[h - tip :] *= np.linspace(1, 0.3, tip)
    elif kind == "bar":
        half[:] = rng.uniform(0.25, 0.8) * wmax
    elif kind == "ball":
        r = min(h, max_w) / 2.0
        h = int(2 * r)
        z = np.arange(h) + 0.5 - r
        half = np.sqrt(np.clip(r * r - z * z, 0, None))
    elif kind == "pin":
        half[:] = rng.uniform(0.6, 1.2)
        half[-2:] = 0.6
    elif kind == "nail":
        half[:] = rng.uniform(0.3, 0.55) * wmax
        half[: int(rng.integers(2, 4))] = wmax
        half[-3:] *= np.array([0.8, 0.55, 0.3])
    elif kind == "sleeve":
        half[:] = np.linspace(rng.uniform(0.4, 0.7), rng.uniform(0.8, 1.0), h) * wmax
    else:
        raise UsageError(f"unknown implant kind {kind!r}")
    w = max_w if max_w % 2 else max_w + 1
    cols = np.abs(np.arange(w) - (w - 1) / 2.0)
    sil = cols[None, :] <= np.maximum(half[:, None], 0.5)
    return _crop(sil)


IMPLANT_KINDS = ("screw", "bar", "ball", "pin", "nail", "sleeve")


def build_metal_library(n: int = 36, max_height: int = 40, max_width: int = 11, seed: int = 2019) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [_silhouette(IMPLANT_KINDS[i % len(IMPLANT_KINDS)], rng, max_height, max_width) for i in range(n)]


def default_library_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "metal_library"


def load_metal_library(directory: str | Path | None = None) -> list[np.ndarray]:
    """Read every PNG in ``directory`` (sorted by filename) as a boolean mask."""
    from maskmar.ctsim.export import load_mask_png

    directory = Path(directory) if directory is not None else default_library_dir()
    files = sorted(directory.glob("*.png"))
    if not files:
        raise ConfigError(f"no mask PNGs found in {directory}")
    return [load_mask_png(f) for f in files]


def write_metal_library(directory: str | Path, masks: Sequence[np.ndarray]) -> list[Path]:
    from maskmar.ctsim.export import save_mask_png

    directory = Path(directory)
    return [save_mask_png(directory / f"implant_{i:03d}.png", m) for i, m in enumerate(masks)]


def implant_volume(
    silhouette: np.ndarray, n_slices: int, size: int, z0: int, center_px: tuple[float, float]
) -> np.ndarray:
    """Solid of revolution of ``silhouette`` about a vertical axis.

    Row i of the silhouette becomes slice ``z0 + i``: a disk centered at
    ``center_px`` (x, y in pixel units from the image center) whose radius
    is half the silhouette's width in that row. A parallel projection of
    the result is the silhouette itself, shifted with the view angle.
    """
    sil = np.asarray(silhouette, dtype=bool)
    vol = np.zeros((n_slices, size, size), dtype=bool)
    yy, xx = np.mgrid[:size, :size]
    dx = xx - (size - 1) / 2.0 - center_px[0]
    dy = yy - (size - 1) / 2.0 - center_px[1]
    r2 = dx * dx + dy * dy
    for i, row in enumerate(sil):
        z = z0 + i
        if not 0 <= z < n_slices or not row.any():
            continue
        radius = row.sum() / 2.0
        vol[z] = r2 <= radius * radius
        if not vol[z].any():
            vol[z][np.unravel_index(np.argmin(r2), r2.shape)] = True
    return vol


# -- pyramid ----------------------------------------------------------------------------------

PyramidSpec = Sequence[tuple[int, int, int]]


def pyramid_from_convs(specs: Sequence[ConvSpec]) -> list[tuple[int, int, int]]:
    return [s.geometry for s in specs]


def pyramid_sizes(size: tuple[int, int], spec: PyramidSpec) -> list[tuple[int, int]]:
    h, w = size
    out = []
    for i, (k, s, p) in enumerate(spec):
        try:
            h, w = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
        except ConfigError as exc:
            raise ConfigError(f"mask pyramid layer {i} (k={k}, s={s}, p={p}): {exc}") from None
        out.append((h, w))
    return out


def mask_pyramid(mask: np.ndarray, spec: PyramidSpec) -> list[np.ndarray]:
    """Cascade of padding-inclusive average pools sharing each encoder layer's (k, s, p).

    Accepts (H, W) or (N, H, W) masks; levels keep the leading dims.
    """
    m = np.asarray(mask, dtype=np.float64)
    squeeze = m.ndim == 2
    if squeeze:
        m = m[None]
    pyramid_sizes(m.shape[-2:], spec)
    level = Tensor(m[:, None])
    out = []
    for k, s, p in spec:
        level = avg_pool2d(level, k, s, p)
        out.append(level.data[:, 0] if not squeeze else level.data[0, 0])
    return out


def coverage(mask: np.ndarray) -> float:
    return float(np.mean(np.asarray(mask, dtype=bool)))
