"""Finite-difference verification of every differentiable op and a small end-to-end generator loss."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from maskmar.autodiff import (
    ConvSpec,
    Tensor,
    activation,
    avg_pool2d,
    check_gradients,
    concat,
    conv2d,
    conv_transpose2d,
)
from maskmar.gan import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    compose_pc,
    loss_content,
    loss_gen,
)

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradCheck:
    name: str
    error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def _away_from_kinks(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with |v| in [0.1, 1.1] so a finite-difference step never crosses zero."""
    return rng.choice([-1.0, 1.0], size=shape) * (0.1 + rng.random(shape))


def _cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    def t(*shape, kinks=False):
        data = _away_from_kinks(rng, shape) if kinks else rng.standard_normal(shape)
        return Tensor(data, requires_grad=True)

    a, b = t(3, 4), t(3, 4)
    probe = rng.standard_normal((3, 4))
    cases = [
        ("add", lambda: ((a + b) * Tensor(probe)).sum(), [a, b]),
        ("sub", lambda: ((a - b) * Tensor(probe)).sum(), [a, b]),
        ("mul", lambda: ((a * b) * Tensor(probe)).sum(), [a, b]),
        ("scalar ops", lambda: (((2.5 - a) * 3.0 + 1.0) / 4.0 * Tensor(probe)).sum(), [a]),
        ("neg", lambda: ((-a) * Tensor(probe)).sum(), [a]),
        ("square", lambda: (a.square() * Tensor(probe)).mean(), [a]),
    ]
    k = t(3, 4, kinks=True)
    cases += [
        ("abs", lambda: (k.abs() * Tensor(probe)).sum(), [k]),
        ("sum", lambda: (a * Tensor(probe)).sum(), [a]),
        ("mean", lambda: (a * Tensor(probe)).mean(), [a]),
        ("reshape", lambda: (a.reshape(2, 6) * Tensor(probe.reshape(2, 6))).sum(), [a]),
    ]
    c1, c2 = t(2, 1, 3, 3), t(2, 2, 3, 3)
    cprobe = rng.standard_normal((2, 3, 3, 3))
    cases.append(("concat", lambda: (concat([c1, c2], axis=1) * Tensor(cprobe)).sum(), [c1, c2]))

    spec = ConvSpec(2, 3, 4, 2, 1)
    x, w, bias = t(1, 2, 6, 6), t(3, 2, 4, 4), t(3)
    cp = rng.standard_normal((1, 3, 3, 3))
    cases.append(("conv2d", lambda: (conv2d(x, w, bias, spec) * Tensor(cp)).sum(), [x, w, bias]))
    tspec = ConvSpec(3, 2, 4, 2, 1)
    xt, wt, bt = t(1, 3, 3, 3), t(3, 2, 4, 4), t(2)
    tp = rng.standard_normal((1, 2, 6, 6))
    cases.append(
        ("conv_transpose2d", lambda: (conv_transpose2d(xt, wt, bt, tspec) * Tensor(tp)).sum(), [xt, wt, bt])
    )
    xp = t(1, 2, 6, 6)
    pp = rng.standard_normal((1, 2, 3, 3))
    cases.append(("avg_pool2d", lambda: (avg_pool2d(xp, 4, 2, 1) * Tensor(pp)).sum(), [xp]))

    for kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
        xa = t(3, 4, kinks=True)
        cases.append((kind, lambda xa=xa, kind=kind: (activation(xa, kind) * Tensor(probe)).sum(), [xa]))
    return cases


def _generator_case(rng: np.random.Generator):
    """Total generator loss of a 2-block model on 16x16 inputs, checked against every generator parameter."""
    gen = Generator(GeneratorConfig(channels=(4, 8)), rng, np.float64)
    disc = Discriminator(DiscriminatorConfig(channels=(4, 8)), rng, np.float64)
    # zero-initialized biases put blank-input activations exactly on the ReLU kinks;
    # biases of order 0.2 keep pre-activations well clear of them at this step size
    for p in gen.parameters() + disc.parameters():
        p.data += (0.2 if p.ndim == 1 else 0.05) * rng.standard_normal(p.shape)
    y = rng.standard_normal((2, 1, 16, 16))
    s = np.zeros((2, 16, 16))
    s[:, 5:11, 3:9] = 1
    x = np.where(s[:, None] > 0, 0.0, y)
    ns = disc.modulation(s)

    def loss():
        yh = compose_pc(x, s, gen(Tensor(x), s))
        return loss_gen(disc(yh), ns, loss_content(yh, y))

    return "generator loss (2 blocks, 16x16)", loss, gen.parameters()


def run_suite(seed: int = 0) -> list[GradCheck]:
    """Run every check in double precision; one result per op plus the end-to-end loss."""
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, params in [*_cases(rng), _generator_case(rng)]:
        t0 = time.perf_counter()
        err = max(check_gradients(fn, params, step=STEP))
        results.append(GradCheck(name, err, time.perf_counter() - t0))
    return results


def format_results(results: list[GradCheck]) -> str:
    width = max(len(r.name) for r in results)
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  rel.err {r.error:.2e}  ({r.seconds:.2f}s)"
        for r in results
    ]
    bad = sum(not r.passed for r in results)
    lines.append(f"{len(results) - bad}/{len(results)} checks below {TOLERANCE:g}")
    return "\n".join(lines)
