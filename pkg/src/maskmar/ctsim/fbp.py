"""Filtered back-projection for parallel beam; fan beam is rebinned first."""
from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy import sparse

from maskmar.ctsim.geometry import ScanGeometry
from maskmar.errors import ConfigError, QualityWarning

MIN_VIEWS = 8


def ramp_filter(n_detectors: int, spacing: float, window: str = "ramp") -> np.ndarray:
    """Frequency response of the band-limited Ram-Lak kernel, zero-padded length.

    Built from the spatial-domain kernel (h(0) = 1/(4 tau^2),
    h(odd n) = -1/(pi n tau)^2) so the DC term is handled correctly.
    """
    size = max(64, int(2 ** math.ceil(math.log2(2 * n_detectors))))
    n = np.concatenate([np.arange(0, size // 2 + 1), np.arange(-(size // 2) + 1, 0)])
    h = np.zeros(size)
    h[0] = 1.0 / (4.0 * spacing**2)
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd] * spacing) ** 2
    resp = np.real(np.fft.fft(h)) * spacing
    if window == "cosine":
        freq = np.fft.fftfreq(size)
        resp *= np.cos(np.pi * freq)
    elif window != "ramp":
        raise ConfigError(f"unknown filter window {window!r}; use 'ramp' or 'cosine'")
    return resp


def filter_sinogram(sino: np.ndarray, spacing: float, window: str = "ramp") -> np.ndarray:
    n_det = sino.shape[-1]
    resp = ramp_filter(n_det, spacing, window)
    size = resp.size
    spec = np.fft.fft(sino, n=size, axis=-1) * resp
    return np.real(np.fft.ifft(spec, axis=-1))[..., :n_det]


def rebin_fan_to_parallel(sino: np.ndarray, geom: ScanGeometry) -> tuple[np.ndarray, ScanGeometry]:
    """Resample a full-rotation fan sinogram onto a parallel grid (same views and bins)."""
    if not math.isclose(geom.angular_range, 2 * math.pi, rel_tol=1e-9):
        raise ConfigError("fan-beam rebinning needs a full 2*pi scan")
    par = ScanGeometry(
        n_views=geom.n_views,
        n_detectors=geom.n_detectors,
        detector_spacing=geom.detector_spacing,
        angular_range=geom.angular_range,
        beam="parallel",
    )
    d = geom.source_to_center
    theta = par.angles[:, None]
    t = par.detector_positions[None, :]
    u = t * d / np.sqrt(d * d - t * t)
    beta = theta + np.arctan(u / d)
    dbeta = geom.angular_range / geom.n_views
    bpos = np.mod(beta, 2 * np.pi) / dbeta
    upos = u / geom.detector_spacing + (geom.n_detectors - 1) / 2.0
    b0 = np.floor(bpos).astype(np.int64)
    fb = bpos - b0
    u0 = np.floor(upos).astype(np.int64)
    fu = upos - u0

    def sample(bi, ui):
        ok = (ui >= 0) & (ui < geom.n_detectors)
        vals = sino[..., bi % geom.n_views, np.clip(ui, 0, geom.n_detectors - 1)]
        return np.where(ok, vals, 0.0)

    out = (
        (1 - fb) * (1 - fu) * sample(b0, u0)
        + (1 - fb) * fu * sample(b0, u0 + 1)
        + fb * (1 - fu) * sample(b0 + 1, u0)
        + fb * fu * sample(b0 + 1, u0 + 1)
    )
    return out, par


@lru_cache(maxsize=16)
def backprojection_matrix(geom: ScanGeometry, h: int, w: int, pixel_size: float) -> sparse.csr_matrix:
    """Pixel-driven linear-interpolation backprojection as an (h*w, views*detectors) sparse matrix."""
    x = (np.arange(w) - (w - 1) / 2.0) * pixel_size
    y = (np.arange(h) - (h - 1) / 2.0) * pixel_size
    xx, yy = (a.ravel() for a in np.meshgrid(x, y))
    n_det = geom.n_detectors
    t0 = (n_det - 1) / 2.0
    pix = np.arange(h * w)
    rows, cols, vals = [], [], []
    for v, theta in enumerate(geom.angles):
        pos = (xx * math.cos(theta) + yy * math.sin(theta)) / geom.detector_spacing + t0
        i0 = np.floor(pos).astype(np.int64)
        f = pos - i0
        for idx, wt in ((i0, 1.0 - f), (i0 + 1, f)):
            ok = (idx >= 0) & (idx < n_det)
            rows.append(pix[ok])
            cols.append(v * n_det + idx[ok])
            vals.append(wt[ok])
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, geom.n_views * n_det)
    )
    mat.sum_duplicates()
    return mat


def fbp(
    sinogram: np.ndarray,
    geom: ScanGeometry,
    out_size: int | tuple[int, int],
    pixel_size: float = 1.0,
    window: str = "ramp",
) -> np.ndarray:
    """Reconstruct mu (mm^-1) from line integrals; accepts (V, D) or (Z, V, D)."""
    sino = np.asarray(sinogram, dtype=np.float64)
    if sino.shape[-2:] != geom.shape:
        raise ConfigError(f"sinogram shape {sino.shape[-2:]} does not match geometry {geom.shape}")
    if geom.n_views < MIN_VIEWS:
        warnings.warn(f"only {geom.n_views} views; reconstruction quality is degraded", QualityWarning, stacklevel=2)
    if geom.beam == "fan":
        sino, geom = rebin_fan_to_parallel(sino, geom)
    h, w = (out_size, out_size) if isinstance(out_size, (int, np.integer)) else out_size

    q = filter_sinogram(sino, geom.detector_spacing, window)
    lead = sino.shape[:-2]
    bp = backprojection_matrix(geom, h, w, float(pixel_size))
    recon = (bp @ q.reshape((-1, geom.n_views * geom.n_detectors)).T).T.reshape(lead + (h, w))
    # (1/2) integral over 2*pi, or the integral over pi, of the filtered views
    recon *= (geom.angular_range / geom.n_views) * (math.pi / geom.angular_range)
    return recon
