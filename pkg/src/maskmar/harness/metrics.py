"""Image-quality metrics on HU images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from maskmar.errors import UsageError


def rmse(a: np.ndarray, b: np.ndarray, region: np.ndarray | None = None, metal: np.ndarray | None = None) -> float:
    """Root mean square difference over ``region``.

    Without an explicit region every pixel outside ``metal`` counts, so the
    value does not depend on what is painted into the metal afterwards.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch {a.shape} vs {b.shape}")
    if region is None:
        region = np.ones(a.shape, bool) if metal is None else ~np.asarray(metal, dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != a.shape:
        raise UsageError(f"region shape {region.shape} does not match {a.shape}")
    if not region.any():
        raise UsageError("rmse region is empty")
    d = a[region] - b[region]
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class SSIMParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 2000.0


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise UsageError(f"SSIM window must be odd and positive, got {size}")
    r = np.arange(size) - size // 2
    w = np.exp(-0.5 * (r / sigma) ** 2)
    return w / w.sum()


def _smooth(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = correlate1d(img, w, axis=-1, mode="reflect")
    return correlate1d(out, w, axis=-2, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray, params: SSIMParams = SSIMParams()) -> np.ndarray:
    """Local SSIM over the last two axes; borders where the window would leave the image are cropped."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim < 2:
        raise UsageError("ssim needs images with at least two dimensions")
    w = gaussian_window(params.window, params.sigma)
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    mu_a, mu_b = _smooth(a, w), _smooth(b, w)
    var_a = _smooth(a * a, w) - mu_a * mu_a
    var_b = _smooth(b * b, w) - mu_b * mu_b
    cov = _smooth(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    smap = num / den
    pad = params.window // 2
    h, wd = a.shape[-2:]
    if h > 2 * pad and wd > 2 * pad:
        smap = smap[..., pad : h - pad, pad : wd - pad]
    return smap


def ssim(a: np.ndarray, b: np.ndarray, params: SSIMParams = SSIMParams()) -> float:
    """Mean local SSIM with a Gaussian window; stacks average over every slice."""
    return float(np.clip(ssim_map(a, b, params).mean(), -1.0, 1.0))
