"""Full reduction pipeline: projection completion, restacking, sinogram correction, reconstruction."""
from __future__ import annotations

import numpy as np

from maskmar.ctsim import ScanGeometry, fbp, mu_to_hu
from maskmar.errors import UsageError
from maskmar.gan.model import ModelBundle


def complete_projections(data: np.ndarray, trace: np.ndarray, pc: ModelBundle) -> np.ndarray:
    """Complete every view's projection (slices x detectors) and restack to (slices, views, det)."""
    data = np.asarray(data, dtype=np.float64)
    trace = np.asarray(trace, dtype=bool)
    if data.ndim != 3 or data.shape != trace.shape:
        raise UsageError(f"expected matching (slices, views, det) data and trace, got {data.shape}, {trace.shape}")
    if pc.mode != "pc":
        raise UsageError(f"projection completion needs a 'pc' bundle, got {pc.mode!r}")
    proj = np.ascontiguousarray(data.transpose(1, 0, 2))
    ptr = np.ascontiguousarray(trace.transpose(1, 0, 2))
    out = proj.copy()
    hit = ptr.any(axis=(1, 2))
    if hit.any():
        out[hit] = pc.complete(proj[hit], ptr[hit])
    return out.transpose(1, 0, 2).copy()


def correct_sinograms(sinos: np.ndarray, trace: np.ndarray, sc: ModelBundle) -> np.ndarray:
    """Refine each slice's sinogram (views x detectors) inside the trace."""
    if sc.mode != "sc":
        raise UsageError(f"sinogram correction needs an 'sc' bundle, got {sc.mode!r}")
    sinos = np.asarray(sinos, dtype=np.float64)
    trace = np.asarray(trace, dtype=bool)
    out = sinos.copy()
    hit = trace.any(axis=(1, 2))
    if hit.any():
        out[hit] = sc.complete(sinos[hit], trace[hit])
    return out


def infer_mar(
    data: np.ndarray,
    trace: np.ndarray,
    geom: ScanGeometry,
    out_size: int,
    pixel_size: float,
    pc: ModelBundle,
    sc: ModelBundle | None = None,
    metal_mask: np.ndarray | None = None,
    metal_hu: float | None = None,
    mu_water: float = 0.02,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (completed sinograms, reconstructed HU volume).

    When both ``metal_mask`` and ``metal_hu`` are given, the metal voxels are
    written back into the reconstruction with value ``metal_hu``.
    """
    sinos = complete_projections(data, trace, pc)
    if sc is not None:
        sinos = correct_sinograms(sinos, trace, sc)
    hu = mu_to_hu(fbp(sinos, geom, out_size, pixel_size), mu_water)
    if metal_mask is not None and metal_hu is not None:
        hu = np.where(np.asarray(metal_mask, dtype=bool), metal_hu, hu)
    return sinos, hu
