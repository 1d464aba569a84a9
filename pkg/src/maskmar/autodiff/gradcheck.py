"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from maskmar.autodiff.tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``param.data``."""
    flat = param.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(fn().data)
        flat[i] = orig - step
        fm = float(fn().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * step)
    return out.reshape(param.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|), robust to near-zero gradients."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5) -> list[float]:
    """Return the relative error of backprop vs finite differences for each param.

    ``fn`` must rebuild the graph from scratch on every call and return a
    scalar Tensor.
    """
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    return [relative_error(a, numerical_grad(fn, p, step)) for a, p in zip(analytic, params)]
