"""Training objectives: style-aware content, transform, hinge adversarial."""

from __future__ import annotations

from .config import LossWeights
from .engine import DimensionError, Tensor, avg_pool, relu


def content_loss(x_c: Tensor, x_o: Tensor, encoder=None, h_c: Tensor | None = None, h_o: Tensor | None = None) -> Tensor:
    """Mean |E(x_c) - E(x_o)| on the generator's own encoder output.

    ``encoder`` maps an image batch to its bottleneck input (e.g.
    ``lambda x: G.encode(x).h``). Precomputed encodings may be passed as
    ``h_c`` / ``h_o`` to share a forward pass.
    """
    if x_c.shape != x_o.shape:
        raise DimensionError(f"content/output shapes differ: {x_c.shape} vs {x_o.shape}")
    h_c = h_c if h_c is not None else encoder(x_c)
    h_o = h_o if h_o is not None else encoder(x_o)
    return (h_c - h_o).abs().mean()


def transform_loss(x_c: Tensor, x_o: Tensor, pool: int = 8) -> Tensor:
    """L1 between pooled images, normalized by the pooled C*H*W."""
    if x_c.shape != x_o.shape:
        raise DimensionError(f"content/output shapes differ: {x_c.shape} vs {x_o.shape}")
    diff = avg_pool(x_c, pool, pool) - avg_pool(x_o, pool, pool)
    # per-image sum / CHW, averaged over the batch
    return diff.abs().sum() * (1.0 / diff.size)


def d_loss(score_real: Tensor, score_photo: Tensor, score_fake: Tensor) -> Tensor:
    """Hinge loss with photographs as an extra fake class; batch means."""
    return relu(1.0 - score_real).mean() + relu(1.0 + score_photo).mean() + relu(1.0 + score_fake).mean()


def g_loss(score_fake: Tensor) -> Tensor:
    return -score_fake.mean()


def total_g_objective(g_adv: Tensor, l_c: Tensor, l_t: Tensor, weights: LossWeights | None = None) -> Tensor:
    w = weights or LossWeights()
    return g_adv * w.lambda_adv + l_c * w.lambda_C + l_t * w.lambda_T
