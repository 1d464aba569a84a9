"""Convolutions, pooling and activations on NCHW tensors.

Convolutions are lowered to matrix products over sliding windows. The
scatter back (col2im) is done by looping over the k*k kernel offsets,
which keeps every inner operation a strided numpy add.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from maskmar.autodiff.tensor import Tensor, as_tensor
from maskmar.errors import ConfigError, UsageError


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel", "stride", "padding"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ConfigError(f"ConvSpec.{name} must be a nonnegative integer, got {v!r}")
        if self.kernel < 1 or self.stride < 1:
            raise ConfigError(f"ConvSpec kernel and stride must be >= 1, got k={self.kernel}, s={self.stride}")

    def output_size(self, size: int) -> int:
        return conv_output_size(size, self.kernel, self.stride, self.padding)

    def transpose_output_size(self, size: int) -> int:
        return (size - 1) * self.stride - 2 * self.padding + self.kernel

    @property
    def geometry(self) -> tuple[int, int, int]:
        return (self.kernel, self.stride, self.padding)


def conv_output_size(size: int, k: int, s: int, p: int) -> int:
    out = (size + 2 * p - k) // s + 1
    if size + 2 * p - k < 0 or out < 1:
        raise ConfigError(f"spatial size {size} too small for kernel={k}, stride={s}, padding={p}")
    return out


def _windows(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """View of shape (N, C, ho, wo, k, k) over a padded NCHW array."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return as_strided(xp, shape=(n, c, ho, wo, k, k), strides=(sn, sc, sh * s, sw * s, sh, sw), writeable=False)


def _im2col(x: np.ndarray, k: int, s: int, p: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = _windows(xp, k, s, ho, wo)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return cols, ho, wo


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add (N*ho*wo, C*k*k) columns into an NCHW array."""
    n, c, h, w = shape
    cols6 = np.ascontiguousarray(cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2))
    out = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + s * ho : s, j : j + s * wo : s] += cols6[:, :, i, j]
    if p:
        out = out[:, :, p : p + h, p : p + w]
    return np.ascontiguousarray(out)


def _check_input(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ConfigError(f"{op}: expected NCHW input, got shape {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """Cross-correlation. ``weight`` is (out, in, k, k), ``bias`` is (out,)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_input(x, "conv2d")
    k, s, p = spec.geometry
    cin, cout = spec.in_channels, spec.out_channels
    if weight.shape != (cout, cin, k, k):
        raise ConfigError(f"conv2d: weight shape {weight.shape} does not match spec {(cout, cin, k, k)}")
    if x.shape[1] != cin:
        raise ConfigError(f"conv2d: input has {x.shape[1]} channels, spec expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ConfigError(f"conv2d: bias shape {bias.shape} does not match ({cout},)")
    n = x.shape[0]
    cols, ho, wo = _im2col(x.data, k, s, p)
    wmat = weight.data.reshape(cout, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    y = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    in_shape = x.shape

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = _col2im(g2 @ wmat, in_shape, k, s, p, ho, wo) if x.requires_grad else None
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(y, parents, backward, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """Adjoint of :func:`conv2d`. ``weight`` is (in, out, k, k), ``bias`` is (out,).

    With zero bias and a shared weight array W, ``conv_transpose2d(v, W)``
    is the exact adjoint of ``conv2d(u, W)`` whenever the sizes round-trip.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_input(x, "conv_transpose2d")
    k, s, p = spec.geometry
    cin, cout = spec.in_channels, spec.out_channels
    if weight.shape != (cin, cout, k, k):
        raise ConfigError(f"conv_transpose2d: weight shape {weight.shape} does not match spec {(cin, cout, k, k)}")
    if x.shape[1] != cin:
        raise ConfigError(f"conv_transpose2d: input has {x.shape[1]} channels, spec expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ConfigError(f"conv_transpose2d: bias shape {bias.shape} does not match ({cout},)")
    n, _, h, w = x.shape
    ho, wo = spec.transpose_output_size(h), spec.transpose_output_size(w)
    if ho < 1 or wo < 1:
        raise ConfigError(f"conv_transpose2d: output size {(ho, wo)} is empty for input {(h, w)}")
    if conv_output_size(ho, k, s, p) != h or conv_output_size(wo, k, s, p) != w:
        raise ConfigError(f"conv_transpose2d: input {(h, w)} does not round-trip through k={k}, s={s}, p={p}")
    wmat = weight.data.reshape(cin, -1)
    xr = x.data.transpose(0, 2, 3, 1).reshape(-1, cin)
    y = _col2im(xr @ wmat, (n, cout, ho, wo), k, s, p, h, w)
    if bias is not None:
        y += bias.data[None, :, None, None]

    def backward(g):
        gcols, _, _ = _im2col(g, k, s, p)
        gx = None
        if x.requires_grad:
            gx = np.ascontiguousarray((gcols @ wmat.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2))
        gw = (xr.T @ gcols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(y, parents, backward, "conv_transpose2d")


def avg_pool2d(x: Tensor, k: int, s: int, p: int) -> Tensor:
    """Mean over k*k windows; zero padding counts toward the k*k divisor."""
    x = as_tensor(x)
    _check_input(x, "avg_pool2d")
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    y = _windows(xp, k, s, ho, wo).sum(axis=(4, 5)) / (k * k)
    y = np.ascontiguousarray(y, dtype=x.dtype)

    def backward(g):
        gp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=g.dtype)
        gk = g / (k * k)
        for i in range(k):
            for j in range(k):
                gp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gk
        return (gp[:, :, p : p + h, p : p + w] if p else gp,)

    return Tensor._make(y, (x,), backward, "avg_pool2d")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope).astype(x.dtype)
    return Tensor._make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = (x.data > 0).astype(x.dtype)
    return Tensor._make(x.data * pos, (x,), lambda g: (g * pos,), "relu")


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


ACTIVATIONS = {
    "leaky_relu": leaky_relu,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(x: Tensor, kind: str, slope: float = 0.2) -> Tensor:
    """Apply a named elementwise activation (``identity`` is a passthrough)."""
    if kind == "identity":
        return as_tensor(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise UsageError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)} or 'identity'") from None
    return fn(x)
