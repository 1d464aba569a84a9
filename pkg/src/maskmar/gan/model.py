"""Model bundles: trained weights, optimizer state and normalization on disk."""
from __future__ import annotations

import configparser
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from maskmar import marf
from maskmar.autodiff import AdamState, Tensor, no_grad
from maskmar.classic import li_complete
from maskmar.errors import ConfigError, UsageError
from maskmar.gan.losses import compose_pc, compose_sc
from maskmar.gan.networks import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from maskmar.inifields import from_section, to_section

MODES = ("pc", "sc")
FILL_MODES = ("li", "constant")
MANIFEST = "manifest.ini"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class Normalizer:
    """Affine map of [lo, hi] onto [-1, 1]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi) or self.hi <= self.lo:
            raise ConfigError(f"normalization range must satisfy lo < hi, got ({self.lo}, {self.hi})")

    @classmethod
    def fit(cls, *arrays: np.ndarray, margin: float = 0.05) -> "Normalizer":
        lo = min(float(np.min(a)) for a in arrays)
        hi = max(float(np.max(a)) for a in arrays)
        pad = margin * max(hi - lo, 1e-12)
        return cls(lo - pad, hi + pad)

    @property
    def half_span(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def forward(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v) - self.lo) / self.half_span - 1.0

    def inverse(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v) + 1.0) * self.half_span + self.lo


def network_input(
    x: np.ndarray, s: np.ndarray, norm: Normalizer, mode: str, fill: float = 0.0, fill_mode: str = "constant"
) -> np.ndarray:
    """Normalized generator input.

    The projection stage overwrites the masked region, either with the row-wise
    linear interpolation of its neighbours (``fill_mode="li"``) or with the
    normalized constant ``fill``. The correction stage passes ``x`` through.
    """
    if mode != "pc":
        return norm.forward(x)
    s = np.asarray(s, dtype=bool)
    if fill_mode == "li":
        return norm.forward(li_complete(x, s))
    return np.where(s, fill, norm.forward(x))


@dataclass
class ModelBundle:
    mode: str
    generator: Generator
    discriminator: Discriminator
    norm: Normalizer
    fill: float = 0.0
    fill_mode: str = "constant"
    iterations: int = 0
    seed: int = 0
    opt_g: AdamState = field(default_factory=AdamState)
    opt_d: AdamState = field(default_factory=AdamState)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fill_mode not in FILL_MODES:
            raise ConfigError(f"fill_mode must be one of {FILL_MODES}, got {self.fill_mode!r}")

    @property
    def dtype(self) -> np.dtype:
        return self.generator.dtype

    def compose(self, x, s, gx):
        return compose_pc(x, s, gx) if self.mode == "pc" else compose_sc(x, s, gx)

    def complete(self, x: np.ndarray, s: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Run the generator and composition on physical-unit images (N, H, W) or (H, W)."""
        x = np.asarray(x, dtype=np.float64)
        s = np.asarray(s, dtype=bool)
        if x.shape != s.shape:
            raise UsageError(f"image shape {x.shape} and mask shape {s.shape} differ")
        single = x.ndim == 2
        if single:
            x, s = x[None], s[None]
        out = np.empty_like(x)
        with no_grad():
            for i in range(0, len(x), batch_size):
                xb, sb = x[i : i + batch_size], s[i : i + batch_size]
                xin = network_input(xb, sb, self.norm, self.mode, self.fill, self.fill_mode).astype(self.dtype)[:, None]
                gx = self.generator(Tensor(xin), sb)
                yh = self.compose(xin, sb, gx).data[:, 0].astype(np.float64)
                res = self.norm.inverse(yh)
                res[~sb] = xb[~sb]  # off-mask values pass through untouched
                out[i : i + batch_size] = res
        return out[0] if single else out


# -- serialization -------------------------------------------------------------------------


def _opt_section(st: AdamState) -> dict[str, str]:
    return {"lr": repr(st.lr), "beta1": repr(st.beta1), "beta2": repr(st.beta2), "eps": repr(st.eps), "t": str(st.t)}


def save_bundle(bundle: ModelBundle, directory: str | os.PathLike) -> Path:
    """Write the bundle as a directory of MARF tensors plus ``manifest.ini``; replaces any existing one."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=directory.name + ".", dir=directory.parent))
    try:
        cp = configparser.ConfigParser()
        cp["bundle"] = {
            "version": str(BUNDLE_VERSION),
            "mode": bundle.mode,
            "dtype": bundle.dtype.name,
            "iterations": str(bundle.iterations),
            "seed": str(bundle.seed),
            "fill": repr(bundle.fill),
            "fill_mode": bundle.fill_mode,
        }
        cp["normalization"] = {"lo": repr(bundle.norm.lo), "hi": repr(bundle.norm.hi)}
        cp["generator"] = to_section(bundle.generator.cfg)
        cp["discriminator"] = to_section(bundle.discriminator.cfg)
        for tag, net, st in (("g", bundle.generator, bundle.opt_g), ("d", bundle.discriminator, bundle.opt_d)):
            cp[f"optimizer.{tag}"] = _opt_section(st)
            for i, (name, p) in enumerate(net.named_parameters()):
                marf.save(tmp / tag / f"{name}.marf", p.data)
                if st.m:
                    marf.save(tmp / f"adam_{tag}" / f"{name}.m.marf", st.m[i])
                    marf.save(tmp / f"adam_{tag}" / f"{name}.v.marf", st.v[i])
        with open(tmp / MANIFEST, "w") as fh:
            cp.write(fh)
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_bundle(directory: str | os.PathLike) -> ModelBundle:
    directory = Path(directory)
    man = directory / MANIFEST
    if not man.is_file():
        raise ConfigError(f"no model bundle at {directory} (missing {MANIFEST})")
    cp = configparser.ConfigParser()
    cp.read(man)
    try:
        b = cp["bundle"]
        if int(b["version"]) != BUNDLE_VERSION:
            raise ConfigError(f"unsupported bundle version {b['version']}")
        dtype = np.dtype(b["dtype"])
        gcfg = from_section(GeneratorConfig, cp["generator"], "generator")
        dcfg = from_section(DiscriminatorConfig, cp["discriminator"], "discriminator")
        norm = Normalizer(float(cp["normalization"]["lo"]), float(cp["normalization"]["hi"]))
    except KeyError as exc:
        raise ConfigError(f"bundle manifest {man} is missing {exc}") from None
    rng = np.random.default_rng(0)
    gen = Generator(gcfg, rng, dtype)
    disc = Discriminator(dcfg, rng, dtype)
    states = {}
    for tag, net in (("g", gen), ("d", disc)):
        sec = cp[f"optimizer.{tag}"]
        st = AdamState(float(sec["lr"]), float(sec["beta1"]), float(sec["beta2"]), float(sec["eps"]), int(sec["t"]))
        for name, p in net.named_parameters():
            arr = marf.load(directory / tag / f"{name}.marf")
            if arr.shape != p.shape:
                raise ConfigError(f"tensor {tag}/{name} has shape {arr.shape}, manifest implies {p.shape}")
            p.data = arr.astype(dtype)
            if st.t > 0:
                st.m.append(marf.load(directory / f"adam_{tag}" / f"{name}.m.marf").astype(dtype))
                st.v.append(marf.load(directory / f"adam_{tag}" / f"{name}.v.marf").astype(dtype))
        states[tag] = st
    return ModelBundle(
        mode=b["mode"],
        generator=gen,
        discriminator=disc,
        norm=norm,
        fill=float(b.get("fill", "0.0")),
        fill_mode=b.get("fill_mode", "constant"),
        iterations=int(b["iterations"]),
        seed=int(b["seed"]),
        opt_g=states["g"],
        opt_d=states["d"],
    )
