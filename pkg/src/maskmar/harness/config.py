"""Experiment configuration read from INI files."""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from maskmar.ctsim import MONO, THREE_BIN, TWO_BIN, ScanGeometry
from maskmar.ctsim.phantom import MATERIAL_MU
from maskmar.errors import ConfigError
from maskmar.gan import DiscriminatorConfig, GeneratorConfig, TrainConfig
from maskmar.inifields import from_section, to_section

METHODS = ("input", "LI", "NMAR", "PC", "PC+SC")
LEARNED = ("PC", "PC+SC")
SPECTRA = {"mono": MONO, "two_bin": TWO_BIN, "three_bin": THREE_BIN}
MASK_SOURCES = ("metal-library", "blob")


@dataclass(frozen=True)
class GeometrySection:
    size: int = 64
    slices: int = 64
    pixel_size: float = 2.0
    views: int = 64
    detectors: int = 64
    detector_spacing: float = 2.0
    angular_range_deg: float = 180.0
    beam: str = "parallel"
    source_to_center: float = 595.0

    def __post_init__(self):
        if self.size < 8 or self.slices < 1:
            raise ConfigError(f"size must be >= 8 and slices >= 1, got {self.size}, {self.slices}")

    def scan(self) -> ScanGeometry:
        return ScanGeometry(
            n_views=self.views,
            n_detectors=self.detectors,
            detector_spacing=self.detector_spacing,
            angular_range=math.radians(self.angular_range_deg),
            source_to_center=self.source_to_center,
            beam=self.beam,
        )


@dataclass(frozen=True)
class PhysicsSection:
    spectrum: str = "two_bin"
    photons: float | None = 2e7
    metal: str = "iron"
    mu_water: float = 0.02

    def __post_init__(self):
        if self.spectrum not in SPECTRA:
            raise ConfigError(f"spectrum must be one of {sorted(SPECTRA)}, got {self.spectrum!r}")
        if self.metal not in MATERIAL_MU:
            raise ConfigError(f"metal must be one of {sorted(MATERIAL_MU)}, got {self.metal!r}")
        if self.photons is not None and not self.photons > 0:
            raise ConfigError(f"photons must be > 0 or none, got {self.photons}")

    @property
    def bins(self):
        return SPECTRA[self.spectrum]

    @property
    def metal_mu(self) -> float:
        return MATERIAL_MU[self.metal]


@dataclass(frozen=True)
class DataSection:
    train_phantoms: int = 100
    test_phantoms: int = 5
    mask_source: str = "metal-library"
    library: str = ""
    train_implants_per_phantom: int = 1
    views_per_implant: int = 2
    test_implants_per_phantom: int = 10
    placement_radius: float = 0.3  # fraction of the half field of view

    def __post_init__(self):
        if self.mask_source not in MASK_SOURCES:
            raise ConfigError(f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}")
        if min(self.train_phantoms, self.test_phantoms, self.train_implants_per_phantom, self.views_per_implant) < 1:
            raise ConfigError("phantom, implant and view counts must be >= 1")
        if self.test_implants_per_phantom < 1:
            raise ConfigError("test_implants_per_phantom must be >= 1")
        if not 0 <= self.placement_radius < 1:
            raise ConfigError(f"placement_radius must be in [0, 1), got {self.placement_radius}")

    @property
    def n_pc_samples(self) -> int:
        return self.train_phantoms * self.train_implants_per_phantom * self.views_per_implant


@dataclass(frozen=True)
class ModelSection:
    iterations: int = 1800
    batch_size: int = 16
    lr: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lam: float = 100.0
    dtype: str = "float32"
    generator_channels: tuple[int, ...] = (16, 32, 64, 128)
    discriminator_channels: tuple[int, ...] = (32, 64, 128)
    mpn: bool = True
    skip: bool = True
    max_samples: int = 400  # cap on sinogram samples for the correction stage
    augment: bool = True
    fill_mode: str = "li"

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            lam=self.lam,
            seed=seed,
            dtype=self.dtype,
            augment=self.augment,
            fill_mode=self.fill_mode,
        )

    def generator(self, residual: bool) -> GeneratorConfig:
        return GeneratorConfig(
            channels=self.generator_channels, mpn=self.mpn, skip=self.skip, zero_init_output=residual
        )

    def discriminator(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(channels=self.discriminator_channels)


@dataclass(frozen=True)
class EvalSection:
    methods: tuple[str, ...] = METHODS
    bins: tuple[float, ...] = (0.0, 200.0, 500.0, 1000.0, 2000.0, math.inf)
    panels: int = 4
    metal_hu: float = 3000.0
    window_center: float = 200.0
    window_width: float = 2000.0

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; available: {', '.join(METHODS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if len(self.bins) < 2 or any(b >= c for b, c in zip(self.bins, self.bins[1:])):
            raise ConfigError(f"mask-size bin edges must be strictly increasing, got {self.bins}")
        if self.bins[0] < 0:
            raise ConfigError("mask-size bin edges must be >= 0")

    def bin_labels(self) -> list[str]:
        def fmt(v):
            return "inf" if math.isinf(v) else str(int(v)) if float(v).is_integer() else repr(v)

        return [f"[{fmt(a)},{fmt(b)})" for a, b in zip(self.bins, self.bins[1:])]

    def bin_index(self, size: float) -> int:
        """Index of the half-open bin containing ``size``; -1 when outside every bin."""
        for i, (a, b) in enumerate(zip(self.bins, self.bins[1:])):
            if a <= size < b:
                return i
        return -1


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output: str = "runs/desk"
    geometry: GeometrySection = field(default_factory=GeometrySection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    data: DataSection = field(default_factory=DataSection)
    pc: ModelSection = field(default_factory=ModelSection)
    sc: ModelSection = field(default_factory=lambda: ModelSection(iterations=750, lr=1e-4))
    eval: EvalSection = field(default_factory=EvalSection)

    def with_overrides(self, seed: int | None = None, output: str | None = None, methods=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if output is not None:
            cfg = replace(cfg, output=str(output))
        if methods is not None:
            cfg = replace(cfg, eval=replace(cfg.eval, methods=tuple(methods)))
        return cfg

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {"seed": str(self.seed), "output": self.output}
        for name in ("geometry", "physics", "data", "pc", "sc", "eval"):
            cp[name] = to_section(getattr(self, name))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)


_SECTIONS = {
    "geometry": GeometrySection,
    "physics": PhysicsSection,
    "data": DataSection,
    "pc": ModelSection,
    "sc": ModelSection,
    "eval": EvalSection,
}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = sorted(set(cp.sections()) - set(_SECTIONS) - {"experiment"})
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {', '.join(unknown)}")
    kw = {}
    if cp.has_section("experiment"):
        exp = dict(cp["experiment"].items())
        extra = sorted(set(exp) - {"seed", "output"})
        if extra:
            raise ConfigError(f"{source} [experiment]: unknown key(s) {', '.join(extra)}")
        if "seed" in exp:
            try:
                kw["seed"] = int(exp["seed"])
            except ValueError:
                raise ConfigError(f"{source} [experiment] seed = {exp['seed']!r} is not an integer") from None
        if "output" in exp:
            kw["output"] = exp["output"]
    defaults = ExperimentConfig()
    for name, cls in _SECTIONS.items():
        if cp.has_section(name):
            base = to_section(getattr(defaults, name))
            base.update(dict(cp[name].items()))
            kw[name] = from_section(cls, base, name)
    if kw.get("seed", 0) < 0:
        raise ConfigError("seed must be >= 0")
    return ExperimentConfig(**kw)


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
