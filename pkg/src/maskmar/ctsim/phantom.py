"""Ellipse phantoms: rasterization, analytic projection, config files, volumes."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from maskmar.ctsim.geometry import ScanGeometry
from maskmar.errors import ConfigError

MATERIAL_MU = {"iron": 0.3, "titanium": 0.12}  # mm^-1 at the reference energy


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]  # (x, y) mm
    axes: tuple[float, float]  # semi-axes (a along x', b along y') mm
    angle: float = 0.0  # rad, counter-clockwise
    mu: float = 0.0

    def bounding_radius(self) -> float:
        return math.hypot(*self.center) + max(self.axes)


@dataclass(frozen=True)
class MetalInsert:
    shape: Ellipse
    material: str = "iron"


@dataclass
class PhantomSpec:
    ellipses: list[Ellipse] = field(default_factory=list)
    metals: list[MetalInsert] = field(default_factory=list)


def _grid(width: int, height: int, pixel_size: float):
    x = (np.arange(width) - (width - 1) / 2.0) * pixel_size
    y = (np.arange(height) - (height - 1) / 2.0) * pixel_size
    return np.meshgrid(x, y)


def _inside(e: Ellipse, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    c, s = math.cos(e.angle), math.sin(e.angle)
    dx, dy = xx - e.center[0], yy - e.center[1]
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2 <= 1.0


def _check_fov(e: Ellipse, width: int, height: int, pixel_size: float) -> None:
    half = 0.5 * pixel_size * min(width, height)
    if e.bounding_radius() > half + 1e-9:
        raise ConfigError(f"ellipse at {e.center} with axes {e.axes} leaves the {2 * half:.1f} mm field of view")


def _coverage(e: Ellipse, width: int, height: int, pixel_size: float, supersample: int) -> np.ndarray:
    if supersample == 1:
        xx, yy = _grid(width, height, pixel_size)
        return _inside(e, xx, yy).astype(np.float64)
    n = supersample
    off = (np.arange(n) + 0.5) / n - 0.5
    xx, yy = _grid(width, height, pixel_size)
    cov = np.zeros((height, width))
    for ox in off:
        for oy in off:
            cov += _inside(e, xx + ox * pixel_size, yy + oy * pixel_size)
    return cov / (n * n)


def render_phantom(
    spec: PhantomSpec, width: int, height: int, pixel_size: float = 1.0, supersample: int = 1
) -> np.ndarray:
    """Additive ellipse superposition (metal excluded).

    ``supersample=1`` samples at pixel centers; larger values average an
    n*n sub-grid per pixel (area coverage).
    """
    img = np.zeros((height, width))
    for e in spec.ellipses:
        _check_fov(e, width, height, pixel_size)
        img += e.mu * _coverage(e, width, height, pixel_size, supersample)
    return img


def render_metal_mask(spec: PhantomSpec, width: int, height: int, pixel_size: float = 1.0) -> np.ndarray:
    xx, yy = _grid(width, height, pixel_size)
    mask = np.zeros((height, width), dtype=bool)
    for m in spec.metals:
        _check_fov(m.shape, width, height, pixel_size)
        mask |= _inside(m.shape, xx, yy)
    return mask


def project_ellipses(ellipses, geom: ScanGeometry) -> np.ndarray:
    """Exact parallel-beam line integrals of continuous ellipses.

    Independent of the discrete projector; used as a reference.
    """
    if geom.beam != "parallel":
        raise ConfigError("analytic projection is implemented for parallel beam only")
    theta = geom.angles[:, None]
    t = geom.detector_positions[None, :]
    out = np.zeros(geom.shape)
    for e in ellipses:
        a, b = e.axes
        alpha = theta - e.angle
        r2 = (a * np.cos(alpha)) ** 2 + (b * np.sin(alpha)) ** 2
        s = t - (e.center[0] * np.cos(theta) + e.center[1] * np.sin(theta))
        inside = s * s < r2
        out += np.where(inside, 2.0 * e.mu * a * b * np.sqrt(np.clip(r2 - s * s, 0.0, None)) / r2, 0.0)
    return out


# -- config files ---------------------------------------------------------------


def _floats(text: str, n: int, key: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: not numeric: {text!r}") from None


def _ellipse_from_section(name: str, sec) -> Ellipse:
    try:
        center = _floats(sec["center"], 2, f"[{name}] center")
        axes = _floats(sec["axes"], 2, f"[{name}] axes")
    except KeyError as exc:
        raise ConfigError(f"[{name}] missing key {exc.args[0]!r}") from None
    if min(axes) <= 0:
        raise ConfigError(f"[{name}] axes must be positive, got {axes}")
    angle = math.radians(float(sec.get("angle_deg", "0")))
    return Ellipse(center, axes, angle, float(sec.get("mu", "0")))


def parse_phantom(text: str) -> PhantomSpec:
    """Read ``[ellipse.<name>]`` and ``[metal.<name>]`` sections.

    Keys: center = x, y (mm); axes = a, b (mm); angle_deg; mu (mm^-1);
    metal sections take ``material`` instead of mu.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed phantom config: {exc}") from None
    spec = PhantomSpec()
    for name in cp.sections():
        kind = name.split(".", 1)[0]
        sec = cp[name]
        if kind == "ellipse":
            spec.ellipses.append(_ellipse_from_section(name, sec))
        elif kind == "metal":
            material = sec.get("material", "iron")
            if material not in MATERIAL_MU:
                raise ConfigError(f"[{name}] unknown material {material!r}")
            e = _ellipse_from_section(name, sec)
            spec.metals.append(MetalInsert(Ellipse(e.center, e.axes, e.angle, MATERIAL_MU[material]), material))
        else:
            raise ConfigError(f"unknown phantom section [{name}]")
    return spec


def load_phantom(path: str | Path) -> PhantomSpec:
    return parse_phantom(Path(path).read_text())


# -- volumes ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]
    axes: tuple[float, float, float]
    angle: float
    mu: float

    def slice_at(self, z: float) -> Ellipse | None:
        dz = (z - self.center[2]) / self.axes[2]
        if abs(dz) >= 1.0:
            return None
        k = math.sqrt(1.0 - dz * dz)
        return Ellipse(self.center[:2], (self.axes[0] * k, self.axes[1] * k), self.angle, self.mu)


def render_volume(ellipsoids, n_slices: int, size: int, pixel_size: float) -> np.ndarray:
    """Stack of axial slices (Z, H, W); slice spacing equals pixel_size."""
    zs = (np.arange(n_slices) - (n_slices - 1) / 2.0) * pixel_size
    vol = np.zeros((n_slices, size, size))
    for iz, z in enumerate(zs):
        ells = [e for e in (el.slice_at(z) for el in ellipsoids) if e is not None]
        vol[iz] = render_phantom(PhantomSpec(ellipses=ells), size, size, pixel_size)
    return vol


def random_limb_phantom(rng: np.random.Generator, size: int, pixel_size: float, n_slices: int, mu_water: float = 0.02):
    """Random extremity-like ellipsoid set: soft-tissue body, one or two bones with marrow, small inclusions."""
    half = 0.5 * size * pixel_size
    zhalf = 0.5 * n_slices * pixel_size
    ells: list[Ellipsoid] = []
    a = rng.uniform(0.70, 0.88) * half
    b = rng.uniform(0.55, 0.85) * a
    ang = rng.uniform(0, math.pi)
    ells.append(Ellipsoid((0.0, 0.0, rng.uniform(-0.1, 0.1) * zhalf), (a, b, rng.uniform(2.5, 4.0) * zhalf), ang, mu_water))
    # fat layer is slightly less attenuating than muscle
    ells.append(Ellipsoid((0.0, 0.0, 0.0), (0.85 * a, 0.85 * b, 3.0 * zhalf), ang, 0.05 * mu_water))
    for _ in range(rng.integers(1, 3)):
        r = rng.uniform(0.0, 0.4) * b
        phi = rng.uniform(0, 2 * math.pi)
        cx, cy = r * math.cos(phi), r * math.sin(phi)
        ra = rng.uniform(0.2, 0.35) * b
        rb = ra * rng.uniform(0.7, 1.0)
        cz = rng.uniform(-0.5, 0.5) * zhalf
        cl = rng.uniform(0.8, 2.0) * zhalf
        bang = rng.uniform(0, math.pi)
        ells.append(Ellipsoid((cx, cy, cz), (ra, rb, cl), bang, rng.uniform(0.6, 1.0) * mu_water))
        ells.append(Ellipsoid((cx, cy, cz), (0.55 * ra, 0.55 * rb, 0.95 * cl), bang, -rng.uniform(0.3, 0.6) * mu_water))
    for _ in range(rng.integers(2, 6)):
        s = rng.uniform(0.03, 0.09) * half
        r = rng.uniform(0.0, 0.75 * b - s)
        phi = rng.uniform(0, 2 * math.pi)
        ells.append(
            Ellipsoid(
                (r * math.cos(phi), r * math.sin(phi), rng.uniform(-1, 1) * zhalf),
                (s, s * rng.uniform(0.5, 1.0), s * rng.uniform(1.0, 4.0)),
                rng.uniform(0, math.pi),
                rng.uniform(-0.1, 0.15) * mu_water,
            )
        )
    return ells
