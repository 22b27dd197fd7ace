"""Multi-scale projection discriminator with spectrally normalized weights.

Score for image x and label vector c over tapped backbone depths i::

    D(x, c) = sum_i w_i * (c . (V_i phi_i) + psi_i(phi_i))

where phi_i is the global mean of tap i and psi_i is a linear map to a scalar.
"""

from __future__ import annotations

import numpy as np

from .config import DiscConfig
from .engine import (
    ConfigurationError,
    DimensionError,
    StyleLabel,
    Tensor,
    conv2d,
    global_avg_pool,
    leaky_relu,
    spectral_divide,
)
from .nn import Module, he_normal


def _normalize(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    return v / max(float(np.linalg.norm(v)), eps)


def power_iteration_step(w_mat: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One u <- normalize(W normalize(Wᵀu)) update."""
    v = _normalize(w_mat.T @ u)
    return _normalize(w_mat @ v)


def spectral_normalize(weight: np.ndarray, u: np.ndarray, iterations: int = 1) -> tuple[np.ndarray, np.ndarray, float]:
    """Advance ``u`` by power iteration and divide ``weight`` by sigma = uᵀWv.

    Returns (normalized weight, updated u, sigma). ``weight`` of any rank is
    viewed as (shape[0], -1). A zero matrix gets sigma clamped to 1e-12.
    """
    w_mat = weight.reshape(weight.shape[0], -1)
    for _ in range(iterations):
        u = power_iteration_step(w_mat, u)
    v = _normalize(w_mat.T @ u)
    sigma = max(float(u @ w_mat @ v), 1e-12)
    return weight / sigma, u, sigma


def label_matrix(label, n: int, k: int, dtype) -> np.ndarray:
    """Expand a StyleLabel / (K,) / (N, K) label spec to an (N, K) array."""
    if isinstance(label, StyleLabel):
        if label.num_styles != k:
            raise ConfigurationError(f"label has {label.num_styles} styles, model has {k}")
        c = label.one_hot(dtype)
    else:
        c = np.asarray(label, dtype=dtype)
    if c.ndim == 1:
        c = np.broadcast_to(c, (n, c.shape[0]))
    if c.shape != (n, k):
        raise ConfigurationError(f"label array shape {c.shape} != ({n}, {k})")
    return np.ascontiguousarray(c)


class Discriminator(Module):
    def __init__(self, config: DiscConfig, rng: np.random.Generator, in_channels: int = 3, heads: str = "projection"):
        super().__init__()
        self.config = config
        self.training = True
        k = config.kernel
        cin = in_channels
        self.blocks = []
        for i, cout in enumerate(config.channels, start=1):
            w = self.add_param(f"block{i}.weight", he_normal(rng, (cout, cin, k, k)))
            b = self.add_param(f"block{i}.bias", np.zeros(cout))
            self.blocks.append((w, b))
            cin = cout
        self.heads = []
        for i in config.scale_taps:
            c = config.channels[i - 1]
            if heads == "projection":
                v = self.add_param(f"head{i}.embed", rng.normal(0.0, 1.0 / np.sqrt(c), size=(config.num_styles, c)))
                pw = self.add_param(f"head{i}.psi.weight", rng.normal(0.0, 1.0 / np.sqrt(c), size=(1, c)))
            else:  # classifier: K-way linear head per tap
                v = None
                pw = self.add_param(f"head{i}.psi.weight", rng.normal(0.0, 1.0 / np.sqrt(c), size=(config.num_styles, c)))
            pb = self.add_param(f"head{i}.psi.bias", np.zeros(pw.shape[0]))
            self.heads.append((v, pw, pb))
        self.u_state: dict[str, np.ndarray] = {}
        for name, p in self.named_parameters():
            if name.endswith("weight") or name.endswith("embed"):
                m = p.data.reshape(p.shape[0], -1).astype(np.float64)
                u = _normalize(rng.normal(size=p.shape[0]))
                for _ in range(config.sn_warmup_iters):
                    u = power_iteration_step(m, u)
                self.u_state[name] = u.astype(p.dtype)

    def _astype_extra(self, dtype) -> None:
        self.u_state = {k: v.astype(dtype) for k, v in self.u_state.items()}

    def eval(self) -> "Discriminator":
        self.training = False
        return self

    def train(self) -> "Discriminator":
        self.training = True
        return self

    # -- weights -------------------------------------------------------------

    def spectral_weights(self, update: bool | None = None, frozen: bool = False) -> dict[str, Tensor]:
        """Spectrally normalized weights for one forward pass.

        ``update`` (default: ``self.training``) advances each u-state by one
        power iteration first. ``frozen`` cuts gradient flow into the raw
        parameters, used for generator steps.
        """
        update = self.training if update is None else update
        out: dict[str, Tensor] = {}
        for name, p in self.named_parameters():
            src = Tensor(p.data) if frozen else p
            if name in self.u_state:
                u = self.u_state[name]
                if update:
                    u = power_iteration_step(p.data.reshape(p.shape[0], -1), u)
                    self.u_state[name] = u
                out[name], _ = spectral_divide(src, u)
            else:
                out[name] = src
        return out

    def spectral_norms(self) -> dict[str, float]:
        """sigma estimates of the current raw weights (no state change)."""
        res = {}
        for name, p in self.named_parameters():
            if name in self.u_state:
                _, _, sigma = spectral_normalize(p.data, self.u_state[name], iterations=0)
                res[name] = sigma
        return res

    # -- forward -------------------------------------------------------------

    def check_input(self, x: Tensor) -> None:
        need = 2 ** (self.config.n_blocks - 1)
        if x.ndim != 4 or x.shape[2] < need or x.shape[3] < need:
            raise DimensionError(f"discriminator needs N x C x >={need} x >={need} input, got {x.shape}")

    def backbone(self, x: Tensor, weights: dict[str, Tensor] | None = None) -> list[Tensor]:
        """Features at the configured taps."""
        self.check_input(x)
        weights = weights if weights is not None else self.spectral_weights()
        k = self.config.kernel
        taps = set(self.config.scale_taps)
        feats = []
        y = x
        for i in range(1, self.config.n_blocks + 1):
            y = conv2d(y, weights[f"block{i}.weight"], weights[f"block{i}.bias"], 2, k // 2, "zero")
            y = leaky_relu(y, self.config.slope)
            if i in taps:
                feats.append(y)
            if i == self.config.scale_taps[-1]:
                break
        return feats

    def project_score(self, x: Tensor, label, weights: dict[str, Tensor] | None = None) -> Tensor:
        """Per-sample scores, shape (N,)."""
        weights = weights if weights is not None else self.spectral_weights()
        feats = self.backbone(x, weights)
        c = Tensor(label_matrix(label, x.shape[0], self.config.num_styles, x.dtype))
        total = None
        for tap, w_i, feat in zip(self.config.scale_taps, self.config.scale_weights, feats):
            phi = global_avg_pool(feat)
            embed = weights[f"head{tap}.embed"]
            proj = (c * (phi @ embed.T)).sum(axis=1)
            psi = (phi @ weights[f"head{tap}.psi.weight"].T).reshape(-1) + weights[f"head{tap}.psi.bias"]
            term = (proj + psi) * float(w_i)
            total = term if total is None else total + term
        return total

    __call__ = project_score

    def logits(self, x: Tensor, weights: dict[str, Tensor] | None = None) -> Tensor:
        """(N, K) class logits for the classifier-head variant."""
        weights = weights if weights is not None else self.spectral_weights()
        feats = self.backbone(x, weights)
        total = None
        for tap, w_i, feat in zip(self.config.scale_taps, self.config.scale_weights, feats):
            phi = global_avg_pool(feat)
            out = (phi @ weights[f"head{tap}.psi.weight"].T + weights[f"head{tap}.psi.bias"]) * float(w_i)
            total = out if total is None else total + out
        return total
