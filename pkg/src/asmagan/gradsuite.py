"""Finite-difference suite over every differentiable primitive and the
composed networks, run at 64-bit precision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import engine as E
from .asm import AnisotropicStrokeModule, SpatialGate
from .config import DiscConfig, GeneratorConfig, LossWeights
from .discriminator import Discriminator
from .engine.gradcheck import GradCheckStats, check_gradients
from .generator import Generator
from .losses import content_loss, d_loss, total_g_objective, transform_loss

PRIMITIVE_TOL = 1e-4
COMPOSITE_TOL = 1e-3
ELEMENTWISE_TOL = 1e-6


@dataclass
class GradResult:
    name: str
    kind: str
    seeds: int
    worst: float
    tol: float
    probes: int = 0
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def _u(rng, *shape, lo=-1.0, hi=1.0):
    return E.Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _away_from_zero(rng, *shape, margin=0.05):
    a = rng.uniform(margin, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return E.Tensor(a, requires_grad=True)


def _probe(rng, *shape):
    """Fixed random projection so the scalar loss depends on every output."""
    return E.Tensor(rng.normal(size=shape))


# primitives -------------------------------------------------------------------


def _conv(rng, stride, mode):
    x, w, b = _u(rng, 1, 2, 5, 5), _u(rng, 3, 2, 3, 3), _u(rng, 3)
    ho = (5 + 2 - 3) // stride + 1
    p = _probe(rng, 1, 3, ho, ho)
    return (lambda: (E.conv2d(x, w, b, stride, 1, mode) * p).sum()), [x, w, b]


def _conv_t(rng):
    x, w, b = _u(rng, 1, 2, 3, 3), _u(rng, 2, 3, 3, 3), _u(rng, 3)
    p = _probe(rng, 1, 3, 5, 5)
    return (lambda: (E.conv2d_transposed(x, w, b, 2, 1) * p).sum()), [x, w, b]


def _inorm(rng):
    x, g, b = _u(rng, 2, 3, 4, 4), _u(rng, 3), _u(rng, 3)
    p = _probe(rng, 2, 3, 4, 4)
    return (lambda: (E.instance_norm(x, g, b) * p).sum()), [x, g, b]


def _cinorm(rng):
    x, g, b = _u(rng, 2, 3, 4, 4), _u(rng, 3, 3), _u(rng, 3, 3)
    lab = E.StyleLabel(int(rng.integers(0, 3)), 3)
    p = _probe(rng, 2, 3, 4, 4)
    return (lambda: (E.cond_instance_norm(x, g, b, lab) * p).sum()), [x, g, b]


def _elementwise(op):
    def build(rng):
        x = _away_from_zero(rng, 2, 3, 4, 4)
        p = _probe(rng, 2, 3, 4, 4)
        return (lambda: (op(x) * p).sum()), [x]

    return build


def _upsample(rng):
    x = _u(rng, 1, 2, 3, 3)
    p = _probe(rng, 1, 2, 6, 6)
    return (lambda: (E.upsample_nearest(x, 2) * p).sum()), [x]


def _avgpool(rng):
    x = _u(rng, 1, 2, 6, 6)
    p = _probe(rng, 1, 2, 2, 2)
    return (lambda: (E.avg_pool(x, 3, 2) * p).sum()), [x]


def _concat(rng):
    a, b = _u(rng, 1, 3, 3, 3), _u(rng, 1, 2, 3, 3)
    p = _probe(rng, 1, 5, 3, 3)
    return (lambda: (E.concat_channels(a, b) * p).sum()), [a, b]


def _chanstats(rng):
    x = _u(rng, 2, 4, 3, 3)
    p, q = _probe(rng, 2, 1, 3, 3), _probe(rng, 2, 1, 3, 3)
    return (lambda: (E.channel_mean(x) * p).sum() + (E.channel_max(x) * q).sum()), [x]


def _linear_ce(rng):
    x, w, b = _u(rng, 4, 5), _u(rng, 3, 5), _u(rng, 3)
    t = rng.integers(0, 3, size=4)
    return (lambda: E.cross_entropy(E.linear(x, w, b), t)), [x, w, b]


def _spectral(rng):
    w = _u(rng, 4, 2, 3, 3)
    u = rng.normal(size=4)
    u /= np.linalg.norm(u)
    p = _probe(rng, 4, 2, 3, 3)
    return (lambda: (E.spectral_divide(w, u)[0] * p).sum()), [w]


def _lift(rng):
    with E.precision("float64"):
        m = AnisotropicStrokeModule(rng, 3, 2, 2, stage=2, downsample_stages=3)
    h = _u(rng, 1, 3, 2, 2)
    lab = E.StyleLabel(1, 2)
    p = _probe(rng, 1, 2, 4, 4)
    return (lambda: (m.lift_hidden(h, lab) * p).sum()), [h, m.lift_weight, m.lift_bias]


def _gate(rng):
    with E.precision("float64"):
        g = SpatialGate(rng)
    g.weight.data[...] = rng.normal(0, 0.3, size=g.weight.shape)
    a, b = _u(rng, 1, 2, 5, 5), _u(rng, 1, 2, 5, 5)
    p = _probe(rng, 1, 1, 5, 5)
    return (lambda: (g(a, b) * p).sum()), [a, b, g.weight, g.bias]


def _fuse(rng):
    with E.precision("float64"):
        m = AnisotropicStrokeModule(rng, 3, 2, 2, stage=1, downsample_stages=2)
    for gate in (m.gate_r, m.gate_z):
        gate.weight.data[...] = rng.normal(0, 0.3, size=gate.weight.shape)
    x, h = _u(rng, 1, 2, 4, 4), _u(rng, 1, 3, 2, 2)
    lab = E.StyleLabel(0, 2)
    p = _probe(rng, 1, 2, 4, 4)
    params = [x, h] + m.parameters()
    return (lambda: (m.fuse(x, h, lab) * p).sum()), params


PRIMITIVES: dict[str, tuple[Callable, float]] = {
    "conv2d/zero/s1": (lambda r: _conv(r, 1, "zero"), PRIMITIVE_TOL),
    "conv2d/reflect/s1": (lambda r: _conv(r, 1, "reflect"), PRIMITIVE_TOL),
    "conv2d/zero/s2": (lambda r: _conv(r, 2, "zero"), PRIMITIVE_TOL),
    "conv2d/reflect/s2": (lambda r: _conv(r, 2, "reflect"), PRIMITIVE_TOL),
    "conv2d_transposed": (_conv_t, PRIMITIVE_TOL),
    "instance_norm": (_inorm, PRIMITIVE_TOL),
    "cond_instance_norm": (_cinorm, PRIMITIVE_TOL),
    "leaky_relu": (_elementwise(lambda x: E.leaky_relu(x, 0.2)), ELEMENTWISE_TOL),
    "tanh": (_elementwise(E.tanh), ELEMENTWISE_TOL),
    "sigmoid": (_elementwise(E.sigmoid), ELEMENTWISE_TOL),
    "upsample_nearest": (_upsample, ELEMENTWISE_TOL),
    "avg_pool": (_avgpool, ELEMENTWISE_TOL),
    "concat_channels": (_concat, PRIMITIVE_TOL),
    "channel_mean_max": (_chanstats, PRIMITIVE_TOL),
    "linear+cross_entropy": (_linear_ce, PRIMITIVE_TOL),
    "spectral_divide": (_spectral, PRIMITIVE_TOL),
    "asm.lift_hidden": (_lift, PRIMITIVE_TOL),
    "asm.spatial_gate": (_gate, PRIMITIVE_TOL),
    "asm.fuse": (_fuse, PRIMITIVE_TOL),
}


# composites -------------------------------------------------------------------

TINY_G = dict(base_channels=2, channel_cap=8, n_resblocks=1, downsample_stages=4, num_styles=2)
TINY_D = dict(n_blocks=6, channels=[2, 3, 4, 4, 4, 4], scale_taps=[2, 4, 6], scale_weights=[1.0, 0.5, 2.0],
              num_styles=2, sn_warmup_iters=5)


def _perturb_zero_init(G: Generator, rng) -> None:
    # zero-initialized residual convs would hide the residual branch from the check
    for name, p in G.named_parameters():
        if np.all(p.data == 0) and p.ndim == 4:
            p.data[...] = rng.normal(0, 0.1, size=p.shape)


def _sample_params(params, rng, n):
    """Pick n (tensor) entries spread across tensors; returns tensors with probe indices."""
    chosen = rng.choice(len(params), size=min(n, len(params)), replace=False)
    return [params[i] for i in chosen]


def _generator_lc(rng, placement="ASM2", size=32):
    with E.precision("float64"):
        G = Generator(GeneratorConfig(asm_placement=placement, **TINY_G), rng)
    _perturb_zero_init(G, rng)
    x = E.Tensor(rng.uniform(-1, 1, size=(1, 3, size, size)))
    lab = E.StyleLabel(1, 2)

    def f():
        x_o, feats = G.generate_with_features(x, lab)
        return content_loss(x, x_o, h_c=feats.h, h_o=G.encode(x_o).h)

    return f, _sample_params(G.parameters(), rng, 5)


def _discriminator_score(rng):
    with E.precision("float64"):
        D = Discriminator(DiscConfig(**TINY_D), rng).eval()
    x = _u(rng, 2, 3, 64, 64)
    c = rng.uniform(0, 1, size=(2, 2))
    return (lambda: D.project_score(x, c).sum()), [x] + _sample_params(D.parameters(), rng, 4)


def _g_objective(rng):
    with E.precision("float64"):
        G = Generator(GeneratorConfig(asm_placement="ASM3", **TINY_G), rng)
        D = Discriminator(DiscConfig(**TINY_D), rng).eval()
    _perturb_zero_init(G, rng)
    x = E.Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
    lab = E.StyleLabel(0, 2)

    def f():
        x_o, feats = G.generate_with_features(x, lab)
        l_c = content_loss(x, x_o, h_c=feats.h, h_o=G.encode(x_o).h)
        l_t = transform_loss(x, x_o, 8)
        adv = -D.project_score(x_o, lab, D.spectral_weights(update=False, frozen=True)).mean()
        return total_g_objective(adv, l_c, l_t, LossWeights())

    return f, _sample_params(G.parameters(), rng, 5)


def _d_objective(rng):
    with E.precision("float64"):
        D = Discriminator(DiscConfig(**TINY_D), rng).eval()
    batch = E.Tensor(rng.uniform(-1, 1, size=(6, 3, 32, 32)))  # real, photo, fake pairs
    lab = E.StyleLabel(1, 2)

    def f():
        s = D.project_score(batch, lab)
        return d_loss(s[:2], s[2:4], s[4:])

    return f, _sample_params(D.parameters(), rng, 5)


COMPOSITES: dict[str, tuple[Callable, float]] = {
    "generator->L_C (ASM2)": (_generator_lc, COMPOSITE_TOL),
    "generator->L_C (no ASM)": (lambda r: _generator_lc(r, "none"), COMPOSITE_TOL),
    "discriminator.project_score": (_discriminator_score, COMPOSITE_TOL),
    "generator objective": (_g_objective, COMPOSITE_TOL),
    "discriminator hinge objective": (_d_objective, COMPOSITE_TOL),
}


def run_suite(seeds: int = 10, composite_probes: int = 4, verbose: Callable[[str], None] | None = None) -> list[GradResult]:
    """Run every check over ``seeds`` seeds; returns one result per check."""
    results = []
    with E.precision("float64"):
        for table, kind, probes in ((PRIMITIVES, "primitive", None), (COMPOSITES, "composite", composite_probes)):
            for name, (build, tol) in table.items():
                t0 = time.perf_counter()
                stats = GradCheckStats()
                for seed in range(seeds):
                    rng = np.random.default_rng(1000 + seed)
                    f, inputs = build(rng)
                    check_gradients(f, inputs, eps=1e-5, max_probes=probes, rng=rng, skip_kinks=True, stats=stats)
                worst = stats.worst
                res = GradResult(name, kind, seeds, worst, tol, stats.probes, stats.skipped)
                results.append(res)
                if verbose:
                    verbose(f"{'PASS' if res.passed else 'FAIL'}  {kind:9s} {name:32s} max rel err {worst:.2e} "
                            f"(tol {tol:.0e}, {seeds} seeds, {stats.probes} probes, {stats.skipped} kink-straddling "
                            f"probes resampled, {time.perf_counter() - t0:.1f}s)")
    return results
