"""Classical sinogram completion: linear interpolation (LI) and NMAR."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from maskmar.ctsim.geometry import ScanGeometry
from maskmar.ctsim.physics import MU_WATER, hu_to_mu
from maskmar.ctsim.projector import radon
from maskmar.errors import ConfigError, QualityWarning, UsageError

NMAR_EPS_REL = 1e-6


@dataclass(frozen=True)
class SegmentationThresholds:
    air_soft: float = -500.0  # HU
    soft_bone: float = 300.0
    metal: float = 2500.0

    def __post_init__(self):
        if not self.air_soft < self.soft_bone < self.metal:
            raise ConfigError(f"thresholds must be strictly increasing, got {self}")


def _interp_row(row: np.ndarray, traced: np.ndarray) -> None:
    idx = np.flatnonzero(traced)
    keep = np.flatnonzero(~traced)
    row[idx] = np.interp(idx, keep, row[keep])


def li_complete(sinogram: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Replace each traced run in every row by linear interpolation of its untraced neighbours.

    Runs touching a row end take the nearest untraced value. A fully traced
    row copies the nearest row that has untraced bins (and warns).
    Works on (V, D) or any (..., V, D) stack.
    """
    sino = np.asarray(sinogram)
    tr = np.asarray(trace, dtype=bool)
    if sino.shape != tr.shape:
        raise UsageError(f"trace shape {tr.shape} does not match sinogram {sino.shape}")
    out = sino.astype(np.float64, copy=True)
    flat, tflat = out.reshape(-1, *sino.shape[-2:]), tr.reshape(-1, *sino.shape[-2:])
    for s, t in zip(flat, tflat):
        full = t.all(axis=1)
        for v in np.flatnonzero(t.any(axis=1) & ~full):
            _interp_row(s[v], t[v])
        if full.any():
            ok = np.flatnonzero(~full)
            if ok.size == 0:
                raise UsageError("every row of the sinogram is inside the trace")
            warnings.warn(f"{int(full.sum())} fully traced rows filled from nearest rows", QualityWarning, stacklevel=2)
            for v in np.flatnonzero(full):
                s[v] = s[ok[np.argmin(np.abs(ok - v))]]
    return out


def segment_prior(image_hu: np.ndarray, th: SegmentationThresholds = SegmentationThresholds()) -> np.ndarray:
    """Piecewise-constant prior: air -1000, soft tissue 0, bone kept, metal -> soft tissue."""
    img = np.asarray(image_hu, dtype=np.float64)
    prior = np.zeros_like(img)
    prior[img < th.air_soft] = -1000.0
    bone = (img > th.soft_bone) & (img <= th.metal)
    prior[bone] = img[bone]
    return prior


def nmar_interpolate(sinogram: np.ndarray, prior_sinogram: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Normalize by the prior projection, interpolate inside the trace, denormalize."""
    sino = np.asarray(sinogram, dtype=np.float64)
    prior = np.asarray(prior_sinogram, dtype=np.float64)
    tr = np.asarray(trace, dtype=bool)
    if not (sino.shape == prior.shape == tr.shape):
        raise UsageError(f"shape mismatch: sinogram {sino.shape}, prior {prior.shape}, trace {tr.shape}")
    if not tr.any():
        return sino.copy()
    eps = NMAR_EPS_REL * max(prior.max(), 0.0)
    if eps == 0.0:
        raise UsageError("prior sinogram is identically zero")
    guarded = np.maximum(prior, eps)
    if np.mean(prior[tr] <= eps) > 0.5:
        warnings.warn("prior projection vanishes over most of the trace; NMAR degrades to LI-like fill", QualityWarning, stacklevel=2)
    completed = li_complete(sino / guarded, tr) * guarded
    out = sino.copy()
    out[tr] = completed[tr]
    return out


def nmar_complete(
    sinogram: np.ndarray,
    trace: np.ndarray,
    uncorrected_recon_hu: np.ndarray,
    geom: ScanGeometry,
    th: SegmentationThresholds = SegmentationThresholds(),
    pixel_size: float = 1.0,
    mu_water: float = MU_WATER,
) -> np.ndarray:
    """NMAR: the prior is a tissue-class segmentation of the uncorrected reconstruction."""
    prior = segment_prior(uncorrected_recon_hu, th)
    prior_sino = radon(hu_to_mu(prior, mu_water), geom, pixel_size)
    if prior_sino.shape != np.shape(sinogram):
        raise ConfigError(f"prior projection {prior_sino.shape} does not match sinogram {np.shape(sinogram)}")
    return nmar_interpolate(sinogram, prior_sino, trace)
