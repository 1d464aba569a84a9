"""Output compositions and the mask fusion loss (masked LSGAN + L1 content)."""
from __future__ import annotations

import numpy as np

from maskmar.autodiff import Tensor, as_tensor
from maskmar.errors import UsageError

LAMBDA_CONTENT = 100.0


def _binary(s, like: Tensor) -> Tensor:
    s = np.asarray(s.data if isinstance(s, Tensor) else s)
    if not np.all((s == 0) | (s == 1)):
        raise UsageError("composition mask must be binary (0/1)")
    if s.shape != like.shape and s.ndim == like.ndim - 1 and like.ndim == 4 and like.shape[1] == 1:
        s = s[:, None]  # (N, H, W) mask for single-channel (N, 1, H, W) images
    if s.shape != like.shape:
        raise UsageError(f"mask shape {s.shape} does not match {like.shape}")
    return Tensor(s.astype(like.dtype))


def compose_pc(x, s, gx: Tensor) -> Tensor:
    """Keep the known input off-mask and the generator output on-mask."""
    gx = as_tensor(gx)
    x = as_tensor(x, dtype=gx.dtype)
    if x.shape != gx.shape:
        raise UsageError(f"shape mismatch: x {x.shape} vs G(x) {gx.shape}")
    st = _binary(s, gx)
    return st * gx + (1.0 - st) * x


def compose_sc(x, s, gx: Tensor) -> Tensor:
    """Add the predicted residual to the input, on-mask only."""
    gx = as_tensor(gx)
    x = as_tensor(x, dtype=gx.dtype)
    if x.shape != gx.shape:
        raise UsageError(f"shape mismatch: x {x.shape} vs G(x) {gx.shape}")
    st = _binary(s, gx)
    return st * (gx + x) + (1.0 - st) * x


def loss_content(y_hat: Tensor, y) -> Tensor:
    """Mean absolute error over every element; off-mask terms vanish by composition."""
    y = as_tensor(y, dtype=y_hat.dtype)
    if y.shape != y_hat.shape:
        raise UsageError(f"shape mismatch {y_hat.shape} vs {y.shape}")
    return (y_hat - y).abs().mean()


def _check_scores(*arrs):
    shapes = {tuple(a.shape) for a in arrs}
    if len(shapes) != 1:
        raise UsageError(f"score/modulation shapes differ: {sorted(shapes)}")


def loss_disc(scores_real: Tensor, scores_fake: Tensor, ns) -> Tensor:
    """mean (N(s) * (1 - D(y)))^2 + mean (N(s) * D(y_hat))^2."""
    ns = as_tensor(ns, dtype=scores_real.dtype)
    _check_scores(scores_real, scores_fake, ns)
    real = (ns * (1.0 - scores_real)).square().mean()
    fake = (ns * scores_fake).square().mean()
    return real + fake


def loss_gen_adv(scores_fake: Tensor, ns) -> Tensor:
    ns = as_tensor(ns, dtype=scores_fake.dtype)
    _check_scores(scores_fake, ns)
    return (ns * (1.0 - scores_fake)).square().mean()


def loss_gen(scores_fake: Tensor, ns, content: Tensor, lam: float = LAMBDA_CONTENT) -> Tensor:
    """Mask-modulated LSGAN generator term plus ``lam`` times the content loss."""
    if lam < 0:
        raise UsageError(f"lambda must be >= 0, got {lam}")
    return loss_gen_adv(scores_fake, ns) + as_tensor(content) * lam
