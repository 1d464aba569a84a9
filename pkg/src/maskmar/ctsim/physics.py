"""HU conversion, polychromatic metal simulation with Poisson noise, metal traces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from maskmar.ctsim.geometry import ScanGeometry
from maskmar.ctsim.phantom import MATERIAL_MU
from maskmar.ctsim.projector import radon
from maskmar.errors import UsageError

MU_WATER = 0.02  # mm^-1
PAPER_PHOTONS = 2e7  # incident photons per detector reading, 120 kVp source
TRACE_REL_THRESHOLD = 1e-6


def mu_to_hu(mu, mu_water: float = MU_WATER):
    if not mu_water > 0:
        raise UsageError(f"mu_water must be > 0, got {mu_water}")
    return 1000.0 * (np.asarray(mu, dtype=np.float64) - mu_water) / mu_water


def hu_to_mu(hu, mu_water: float = MU_WATER):
    if not mu_water > 0:
        raise UsageError(f"mu_water must be > 0, got {mu_water}")
    return np.asarray(hu, dtype=np.float64) * (mu_water / 1000.0) + mu_water


@dataclass(frozen=True)
class EnergyBin:
    fraction: float  # share of incident photons
    tissue_scale: float  # tissue mu multiplier relative to the reference energy
    metal_scale: float  # metal mu multiplier relative to the reference energy


MONO = (EnergyBin(1.0, 1.0, 1.0),)
# iron is far more attenuating in the low bin: beam hardening + starvation
TWO_BIN = (EnergyBin(0.45, 1.15, 2.6), EnergyBin(0.55, 0.88, 0.55))
THREE_BIN = (EnergyBin(0.3, 1.25, 3.2), EnergyBin(0.45, 0.98, 1.0), EnergyBin(0.25, 0.8, 0.45))


def simulate_metal_sinogram(
    image: np.ndarray,
    metal_mask: np.ndarray,
    geom: ScanGeometry,
    physics: Sequence[EnergyBin] = TWO_BIN,
    photons: float | None = PAPER_PHOTONS,
    seed: int | None = 0,
    pixel_size: float = 1.0,
    metal_mu: float = MATERIAL_MU["iron"],
) -> np.ndarray:
    """Measured line integrals -log(I / I0) of an image with metal inserted.

    Metal replaces tissue inside ``metal_mask``. ``photons=None`` disables
    noise (the infinite-photon limit). Works on a single slice or a
    (Z, H, W) stack; zero-count readings are clamped to one count.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(metal_mask)
    if mask.shape != image.shape:
        raise UsageError(f"metal mask shape {mask.shape} does not match image {image.shape}")
    if photons is not None and not photons > 0:
        raise UsageError(f"photons must be > 0, got {photons}")
    fractions = np.array([b.fraction for b in physics], dtype=np.float64)
    if fractions.min() < 0 or not np.isclose(fractions.sum(), 1.0):
        raise UsageError(f"energy-bin fractions must be nonnegative and sum to 1, got {fractions}")

    maskf = mask.astype(np.float64)
    tissue = radon(image * (1.0 - maskf), geom, pixel_size)
    metal = radon(maskf * metal_mu, geom, pixel_size) if maskf.any() else np.zeros_like(tissue)
    transmission = np.zeros_like(tissue)
    for b in physics:
        transmission += b.fraction * np.exp(-(b.tissue_scale * tissue + b.metal_scale * metal))
    if photons is None:
        return -np.log(transmission)
    rng = np.random.default_rng(seed)
    counts = rng.poisson(photons * transmission).astype(np.float64)
    counts = np.maximum(counts, 1.0)
    return -np.log(counts / photons)


def metal_trace(metal_mask: np.ndarray, geom: ScanGeometry, pixel_size: float = 1.0) -> np.ndarray:
    """Boolean trace: rays whose projection of the mask reaches 1e-6 of its max."""
    m = np.asarray(metal_mask, dtype=np.float64)
    proj = radon(m, geom, pixel_size)
    if m.ndim == 2:
        peak = proj.max()
        if peak <= 0:
            return np.zeros(geom.shape, dtype=bool)
        return proj >= TRACE_REL_THRESHOLD * peak
    peaks = proj.reshape(proj.shape[0], -1).max(axis=1)
    out = proj >= (TRACE_REL_THRESHOLD * peaks)[:, None, None]
    out[peaks <= 0] = False
    return out
