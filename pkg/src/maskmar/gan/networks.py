"""Mask-pyramid generator and patch discriminator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskmar.autodiff import (
    ConvSpec,
    Tensor,
    activation,
    concat,
    conv2d,
    conv_transpose2d,
    init_bias,
    init_conv_weight,
)
from maskmar.errors import ConfigError
from maskmar.masks import mask_pyramid, pyramid_sizes


@dataclass(frozen=True)
class GeneratorConfig:
    channels: tuple[int, ...] = (32, 64, 128, 256)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    in_channels: int = 1
    out_channels: int = 1
    mpn: bool = True
    skip: bool = True
    encoder_activation: str = "leaky_relu"
    decoder_activation: str = "relu"
    output_activation: str = "tanh"
    slope: float = 0.2
    zero_init_output: bool = False
    input_skip: bool = True  # full-resolution 3x3 head over [decoder features, x, s]
    head_channels: int = 8

    def __post_init__(self):
        if not self.channels:
            raise ConfigError("generator needs at least one encoder block")

    @property
    def depth(self) -> int:
        return len(self.channels)

    @property
    def _mask_ch(self) -> int:
        return 1 if self.mpn else 0

    def feature_channels(self, i: int) -> int:
        """Channels of encoder block i's output after the mask level is appended."""
        return self.channels[i] + self._mask_ch

    def encoder_specs(self) -> list[ConvSpec]:
        specs, cin = [], self.in_channels
        for i, c in enumerate(self.channels):
            specs.append(ConvSpec(cin, c, self.kernel, self.stride, self.padding))
            cin = self.feature_channels(i)
        return specs

    def decoder_specs(self) -> list[ConvSpec]:
        n = self.depth
        specs = []
        cin = self.feature_channels(n - 1)
        for j in range(n):
            last = j == n - 1
            if last:
                cout = self.head_channels if self.input_skip else self.out_channels
            else:
                cout = self.channels[n - 2 - j]
            specs.append(ConvSpec(cin, cout, self.kernel, self.stride, self.padding))
            if not last:
                cin = cout + (self.feature_channels(n - 2 - j) if self.skip else 0)
        return specs

    def head_spec(self) -> ConvSpec | None:
        if not self.input_skip:
            return None
        return ConvSpec(self.head_channels + self.in_channels + self._mask_ch, self.out_channels, 3, 1, 1)

    def pyramid(self) -> list[tuple[int, int, int]]:
        return [s.geometry for s in self.encoder_specs()]

    def feature_sizes(self, size: tuple[int, int]) -> list[tuple[int, int]]:
        return pyramid_sizes(size, self.pyramid())

    def check_input_size(self, size: tuple[int, int]) -> None:
        sizes = [tuple(size)] + self.feature_sizes(size)
        for spec, (hin, win), (hout, wout) in zip(reversed(self.encoder_specs()), reversed(sizes[:-1]), reversed(sizes[1:])):
            if spec.transpose_output_size(hout) != hin or spec.transpose_output_size(wout) != win:
                raise ConfigError(f"input size {tuple(size)} is not restored by the decoder at {(hin, win)}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple[int, ...] = (32, 64, 128)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    head_kernel: int = 3
    head_padding: int = 1
    in_channels: int = 1
    activation: str = "leaky_relu"
    slope: float = 0.2

    def block_specs(self) -> list[ConvSpec]:
        specs, cin = [], self.in_channels
        for c in self.channels:
            specs.append(ConvSpec(cin, c, self.kernel, self.stride, self.padding))
            cin = c
        specs.append(ConvSpec(cin, 1, self.head_kernel, 1, self.head_padding))
        return specs

    def pyramid(self) -> list[tuple[int, int, int]]:
        return [s.geometry for s in self.block_specs()]

    def score_size(self, size: tuple[int, int]) -> tuple[int, int]:
        return pyramid_sizes(size, self.pyramid())[-1]


def _conv_params(rng, spec: ConvSpec, transpose: bool, dtype, zero: bool = False):
    shape = (spec.in_channels, spec.out_channels) if transpose else (spec.out_channels, spec.in_channels)
    shape = shape + (spec.kernel, spec.kernel)
    if zero:
        w = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
    else:
        w = init_conv_weight(rng, shape, dtype=dtype)
    return w, init_bias(spec.out_channels, dtype=dtype)


class Generator:
    """Encoder-decoder whose encoder blocks are each followed by the matching mask-pyramid level."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.enc = [_conv_params(rng, s, False, dtype) for s in cfg.encoder_specs()]
        dec_specs = cfg.decoder_specs()
        head = cfg.head_spec()
        self.dec = [
            _conv_params(rng, s, True, dtype, zero=cfg.zero_init_output and head is None and j == len(dec_specs) - 1)
            for j, s in enumerate(dec_specs)
        ]
        self.head = None if head is None else _conv_params(rng, head, False, dtype, zero=cfg.zero_init_output)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(self.enc):
            out += [(f"enc{i}.weight", w), (f"enc{i}.bias", b)]
        for j, (w, b) in enumerate(self.dec):
            out += [(f"dec{j}.weight", w), (f"dec{j}.bias", b)]
        if self.head is not None:
            out += [("head.weight", self.head[0]), ("head.bias", self.head[1])]
        return out

    def __call__(self, x: Tensor, s: np.ndarray) -> Tensor:
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ConfigError(f"generator expects (N, {cfg.in_channels}, H, W) input, got {x.shape}")
        s = np.asarray(s)
        if s.shape != (x.shape[0],) + x.shape[2:]:
            raise ConfigError(f"mask shape {s.shape} does not match input {x.shape}")
        cfg.check_input_size(x.shape[2:])
        levels = mask_pyramid(s, cfg.pyramid()) if cfg.mpn else None

        feats = []
        h = x
        for i, (spec, (w, b)) in enumerate(zip(cfg.encoder_specs(), self.enc)):
            h = activation(conv2d(h, w, b, spec), cfg.encoder_activation, cfg.slope)
            if cfg.mpn:
                h = concat([h, Tensor(levels[i][:, None].astype(self.dtype))], axis=1)
            feats.append(h)

        n = cfg.depth
        for j, (spec, (w, b)) in enumerate(zip(cfg.decoder_specs(), self.dec)):
            if j > 0 and cfg.skip:
                h = concat([h, feats[n - 1 - j]], axis=1)
            h = conv_transpose2d(h, w, b, spec)
            act = cfg.output_activation if j == n - 1 and self.head is None else cfg.decoder_activation
            h = activation(h, act, cfg.slope)
        if self.head is not None:
            parts = [h, x]
            if cfg.mpn:
                parts.append(Tensor(s[:, None].astype(self.dtype)))
            w, b = self.head
            h = activation(conv2d(concat(parts, axis=1), w, b, cfg.head_spec()), cfg.output_activation, cfg.slope)
        return h


class Discriminator:
    """Fully convolutional patch discriminator producing a score map."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.blocks = [_conv_params(rng, s, False, dtype) for s in cfg.block_specs()]

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.blocks for t in pair]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(self.blocks):
            out += [(f"block{i}.weight", w), (f"block{i}.bias", b)]
        return out

    def __call__(self, y: Tensor) -> Tensor:
        specs = self.cfg.block_specs()
        h = y
        for i, (spec, (w, b)) in enumerate(zip(specs, self.blocks)):
            h = conv2d(h, w, b, spec)
            if i < len(specs) - 1:
                h = activation(h, self.cfg.activation, self.cfg.slope)
        return h

    def modulation(self, s: np.ndarray) -> np.ndarray:
        """N(s): the mask pooled through the discriminator's layer geometry, (N, 1, h, w)."""
        return mask_pyramid(np.asarray(s), self.cfg.pyramid())[-1][:, None].astype(self.dtype)
