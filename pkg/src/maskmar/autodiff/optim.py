"""Adam with bias correction, plus parameter initialization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from maskmar.autodiff.tensor import Tensor
from maskmar.errors import NumericalError, UsageError


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Update ``params`` in place from ``grads``; returns the advanced state."""
    if len(params) != len(grads):
        raise UsageError(f"adam_step: {len(params)} params but {len(grads)} grads")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise UsageError(f"adam_step: param {i} has shape {p.shape}, grad has {g.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericalError(f"adam_step: {bad} non-finite gradient entries in param {i} (shape {p.shape})")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return state


class Adam:
    """Thin stateful wrapper around :func:`adam_step` for a list of Tensors."""

    def __init__(self, params: Sequence[Tensor], lr=5e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)


def init_conv_weight(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float64) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


def init_bias(n: int, dtype=np.float64) -> Tensor:
    return Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
