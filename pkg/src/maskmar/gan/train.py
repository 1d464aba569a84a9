"""Adversarial training of the projection- and sinogram-completion networks."""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from maskmar.autodiff import Adam, Tensor, no_grad
from maskmar.errors import ConfigError, NumericalError, UsageError
from maskmar.gan.losses import LAMBDA_CONTENT, loss_content, loss_disc, loss_gen_adv
from maskmar.gan.model import FILL_MODES, ModelBundle, Normalizer, network_input, save_bundle
from maskmar.gan.networks import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from maskmar.marf import atomic_write_text

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("iter", "loss_d", "loss_g_adv", "loss_g_content")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 16
    lr: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lam: float = LAMBDA_CONTENT
    seed: int = 0
    dtype: str = "float32"
    fill: float = 0.0
    fill_mode: str = "li"  # how the projection stage fills the masked input region
    augment: bool = True  # random mirror flips of both image axes per sample

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError(f"need iterations >= 0 and batch_size >= 1, got {self.iterations}, {self.batch_size}")
        if self.lr <= 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("learning rate must be > 0 and betas in [0, 1)")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.fill_mode not in FILL_MODES:
            raise ConfigError(f"fill_mode must be one of {FILL_MODES}, got {self.fill_mode!r}")


@dataclass
class PairedSet:
    """Training pairs in physical units: corrupted ``x``, target ``y``, binary mask ``s`` (all (N, H, W))."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=bool)
        if not (self.x.shape == self.y.shape == self.s.shape) or self.x.ndim != 3:
            raise UsageError(f"x, y, s must share an (N, H, W) shape, got {self.x.shape}, {self.y.shape}, {self.s.shape}")
        if len(self.x) == 0:
            raise UsageError("training set is empty")
        off = ~self.s
        if not np.array_equal(self.x[off], self.y[off], equal_nan=True):
            raise UsageError("every sample needs x == y wherever the mask is 0")

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: list[tuple[int, float, float, float]] = field(default_factory=list)
    initial_masked_l1: float = float("nan")
    final_masked_l1: float = float("nan")


def masked_l1(bundle: ModelBundle, data: PairedSet, batch_size: int = 32) -> float:
    """Mean |y_hat - y| over masked pixels, in normalized units."""
    n_mask = int(data.s.sum())
    if n_mask == 0:
        return 0.0
    total = 0.0
    norm = bundle.norm
    with no_grad():
        for i in range(0, len(data), batch_size):
            xb, yb, sb = data.x[i : i + batch_size], data.y[i : i + batch_size], data.s[i : i + batch_size]
            xin = network_input(xb, sb, norm, bundle.mode, bundle.fill, bundle.fill_mode).astype(bundle.dtype)[:, None]
            yh = bundle.compose(xin, sb, bundle.generator(Tensor(xin), sb)).data[:, 0]
            total += float(np.abs(yh.astype(np.float64) - norm.forward(yb))[sb].sum())
    return total / n_mask


def losses_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOSS_COLUMNS)
    for it, ld, la, lc in history:
        w.writerow([it, repr(ld), repr(la), repr(lc)])
    return buf.getvalue()


def _mirror(rng: np.random.Generator, x: np.ndarray, y: np.ndarray, s: np.ndarray):
    """Flip each sample along either image axis with probability 1/2."""
    flips = rng.random((len(x), 2)) < 0.5
    x, y, s = x.copy(), y.copy(), s.copy()
    for i, (fv, fh) in enumerate(flips):
        if fv:
            x[i], y[i], s[i] = x[i, ..., ::-1, :], y[i, ..., ::-1, :], s[i, ::-1, :]
        if fh:
            x[i], y[i], s[i] = x[i, ..., ::-1], y[i, ..., ::-1], s[i, :, ::-1]
    return x, y, s


def _snapshot(bundle: ModelBundle):
    nets = (bundle.generator, bundle.discriminator)
    return [[p.data.copy() for p in n.parameters()] for n in nets]


def _restore(bundle: ModelBundle, snap) -> None:
    for net, arrs in zip((bundle.generator, bundle.discriminator), snap):
        for p, a in zip(net.parameters(), arrs):
            p.data = a


def new_bundle(
    mode: str,
    norm: Normalizer,
    gen_cfg: GeneratorConfig | None = None,
    disc_cfg: DiscriminatorConfig | None = None,
    cfg: TrainConfig = TrainConfig(),
) -> ModelBundle:
    if gen_cfg is None:
        gen_cfg = GeneratorConfig(zero_init_output=(mode == "sc"))
    disc_cfg = disc_cfg or DiscriminatorConfig()
    rng = np.random.default_rng(cfg.seed)
    dtype = np.dtype(cfg.dtype)
    gen = Generator(gen_cfg, rng, dtype)
    disc = Discriminator(disc_cfg, rng, dtype)
    return ModelBundle(mode, gen, disc, norm, fill=cfg.fill, fill_mode=cfg.fill_mode, seed=cfg.seed)


def train(
    data: PairedSet,
    mode: str,
    gen_cfg: GeneratorConfig | None = None,
    disc_cfg: DiscriminatorConfig | None = None,
    cfg: TrainConfig = TrainConfig(),
    norm: Normalizer | None = None,
    checkpoint_dir: str | os.PathLike | None = None,
    progress: Callable[[int, tuple], None] | None = None,
) -> TrainResult:
    """Alternate one discriminator and one generator Adam step per iteration.

    Batches are drawn from a generator seeded by ``cfg.seed`` so equal inputs
    give bit-identical weights. A non-finite loss or gradient aborts training;
    when ``checkpoint_dir`` is given the last good weights are written there
    before the :class:`NumericalError` propagates.
    """
    norm = norm or Normalizer.fit(data.x, data.y)
    bundle = new_bundle(mode, norm, gen_cfg, disc_cfg, cfg)
    bundle.generator.cfg.check_input_size(data.x.shape[1:])
    bundle.discriminator.cfg.score_size(data.x.shape[1:])
    return continue_training(bundle, data, cfg, checkpoint_dir, progress)


def continue_training(
    bundle: ModelBundle,
    data: PairedSet,
    cfg: TrainConfig,
    checkpoint_dir: str | os.PathLike | None = None,
    progress: Callable[[int, tuple], None] | None = None,
) -> TrainResult:
    gen, disc, norm = bundle.generator, bundle.discriminator, bundle.norm
    opt_g = Adam(gen.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    opt_d = Adam(disc.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    if bundle.opt_g.t:
        opt_g.state, opt_d.state = bundle.opt_g, bundle.opt_d
    bundle.opt_g, bundle.opt_d = opt_g.state, opt_d.state

    dtype = bundle.dtype
    xin_all = network_input(data.x, data.s, norm, bundle.mode, bundle.fill, bundle.fill_mode).astype(dtype)[:, None]
    y_all = norm.forward(data.y).astype(dtype)[:, None]
    ns_all = disc.modulation(data.s)
    rng = np.random.default_rng([cfg.seed, bundle.iterations])
    n = len(data)
    result = TrainResult(bundle, initial_masked_l1=masked_l1(bundle, data))

    for it in range(cfg.iterations):
        snap = _snapshot(bundle)
        idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        xb, yb_arr, sb = xin_all[idx], y_all[idx], data.s[idx]
        if cfg.augment:
            xb, yb_arr, sb = _mirror(rng, xb, yb_arr, sb)
            nsb = disc.modulation(sb)
        else:
            nsb = ns_all[idx]
        yb = Tensor(yb_arr)
        try:
            gx = gen(Tensor(xb), sb)
            y_hat = bundle.compose(xb, sb, gx)

            opt_d.zero_grad()
            ld = loss_disc(disc(yb), disc(y_hat.detach()), nsb)
            ld.backward()
            opt_d.step()

            opt_g.zero_grad()
            adv = loss_gen_adv(disc(y_hat), nsb)
            content = loss_content(y_hat, yb)
            lg = adv + content * cfg.lam
            lg.backward()
            opt_g.step()
        except NumericalError as exc:
            _restore(bundle, snap)
            if checkpoint_dir is not None:
                save_bundle(bundle, checkpoint_dir)
                log.error("non-finite value at iteration %d; last good weights saved to %s", bundle.iterations, checkpoint_dir)
            raise NumericalError(f"training diverged at iteration {bundle.iterations}: {exc}") from exc
        bundle.iterations += 1
        row = (bundle.iterations, ld.item(), adv.item(), content.item())
        result.history.append(row)
        if progress is not None:
            progress(it, row)

    result.final_masked_l1 = masked_l1(bundle, data)
    if checkpoint_dir is not None:
        save_bundle(bundle, checkpoint_dir)
    return result


def train_pc(data: PairedSet, cfg: TrainConfig = TrainConfig(), gen_cfg=None, disc_cfg=None, **kw) -> TrainResult:
    """Projection completion: the generator fills the masked region from surrounding context."""
    return train(data, "pc", gen_cfg, disc_cfg, cfg, **kw)


def train_sc(data: PairedSet, cfg: TrainConfig = TrainConfig(), gen_cfg=None, disc_cfg=None, **kw) -> TrainResult:
    """Sinogram correction: the generator predicts an on-mask residual added to the input.

    With ``gen_cfg=None`` the output layer starts at zero, so training begins from the identity.
    """
    return train(data, "sc", gen_cfg, disc_cfg, cfg, **kw)


def write_losses(path: str | os.PathLike, history) -> Path:
    path = Path(path)
    atomic_write_text(path, losses_csv(history))
    return path
