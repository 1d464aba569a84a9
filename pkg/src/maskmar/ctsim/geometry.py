"""Scan geometry for 2-D parallel- and fan-beam CT."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from maskmar.errors import ConfigError

# distance from the source to the rotation center used by the reference scanner
PAPER_SOURCE_TO_CENTER_MM = 595.0


@dataclass(frozen=True)
class ScanGeometry:
    """Views are uniformly spaced over ``angular_range`` starting at 0.

    ``detector_spacing`` is measured at the rotation center; for fan beam the
    detector is a virtual flat line through the center.
    """

    n_views: int = 180
    n_detectors: int = 183
    detector_spacing: float = 1.0
    angular_range: float = 2 * math.pi
    source_to_center: float = PAPER_SOURCE_TO_CENTER_MM
    beam: str = "parallel"

    def __post_init__(self):
        if self.n_views < 1 or self.n_detectors < 1:
            raise ConfigError(f"n_views and n_detectors must be >= 1, got {self.n_views}, {self.n_detectors}")
        if not self.detector_spacing > 0:
            raise ConfigError(f"detector_spacing must be > 0, got {self.detector_spacing}")
        if not self.angular_range > 0:
            raise ConfigError(f"angular_range must be > 0, got {self.angular_range}")
        if self.beam not in ("parallel", "fan"):
            raise ConfigError(f"beam must be 'parallel' or 'fan', got {self.beam!r}")
        if self.beam == "fan" and not self.source_to_center > 0:
            raise ConfigError("fan beam needs a positive source_to_center")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_views) * (self.angular_range / self.n_views)

    @property
    def detector_positions(self) -> np.ndarray:
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2.0) * self.detector_spacing

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_views, self.n_detectors)

    def check_image(self, height: int, width: int, pixel_size: float) -> None:
        if self.beam == "fan":
            half_diag = 0.5 * pixel_size * math.hypot(height, width)
            if self.source_to_center <= half_diag:
                raise ConfigError(
                    f"source_to_center {self.source_to_center} mm must exceed the image half-diagonal {half_diag:.1f} mm"
                )


def fitted_geometry(size: int, pixel_size: float = 1.0, n_views: int = 180, **kw) -> ScanGeometry:
    """Parallel geometry whose detector just covers the image diagonal."""
    n_det = int(math.ceil(size * math.sqrt(2))) + 2
    if n_det % 2 != size % 2:
        n_det += 1
    return ScanGeometry(n_views=n_views, n_detectors=n_det, detector_spacing=pixel_size, **kw)
