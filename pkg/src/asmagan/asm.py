"""Anisotropic Stroke Module: gated fusion of a shallow encoder feature with
the lifted, label-conditioned bottleneck state.

Gate equations::

    h_hat   = W_T * [h, c]                 (transposed conv up to x's grid)
    r       = gate_r([h_hat, x])           (spatial gate, values in (0, 1))
    h_tilde = tanh(W * [r . h_hat, x])
    z       = gate_z([h_hat, x])
    x_hat   = z . h_tilde + (1 - z) . h_hat
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    DimensionError,
    StyleLabel,
    Tensor,
    broadcast_label,
    channel_max,
    channel_mean,
    concat_channels,
    conv2d,
    conv2d_transposed,
    sigmoid,
    tanh,
)
from .nn import Conv, Module, he_normal


@dataclass
class AsmOutput:
    x_hat: Tensor
    h_hat: Tensor
    h_tilde: Tensor
    r: Tensor
    z: Tensor


class SpatialGate(Module):
    """[a, b] -> channel mean & max -> conv7 (reflect) -> sigmoid, one channel."""

    def __init__(self, rng: np.random.Generator, kernel: int = 7):
        super().__init__()
        self.kernel = kernel
        self.weight = self.add_param("weight", rng.normal(0.0, 0.05, size=(1, 2, kernel, kernel)))
        self.bias = self.add_param("bias", np.zeros(1))

    def __call__(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise DimensionError(f"gate inputs differ: {a.shape} vs {b.shape}")
        both = concat_channels(a, b)
        stats = concat_channels(channel_mean(both), channel_max(both))
        return sigmoid(conv2d(stats, self.weight, self.bias, 1, self.kernel // 2, "reflect"))


class AnisotropicStrokeModule(Module):
    """Fuses stage-``stage`` encoder features (resolution 1/2**stage) with h."""

    def __init__(
        self,
        rng: np.random.Generator,
        hidden_channels: int,
        feature_channels: int,
        num_styles: int,
        stage: int,
        downsample_stages: int = 4,
        disable_reset_gate: bool = False,
        disable_update_gate: bool = False,
    ):
        super().__init__()
        if not 1 <= stage <= downsample_stages:
            raise DimensionError(f"ASM stage {stage} must lie in 1..{downsample_stages}")
        self.stage = stage
        self.num_styles = num_styles
        self.lift_stride = 2 ** (downsample_stages - stage)
        self.disable_reset_gate = disable_reset_gate
        self.disable_update_gate = disable_update_gate
        s = self.lift_stride
        cin = hidden_channels + num_styles
        self.lift_weight = self.add_param("lift.weight", he_normal(rng, (cin, feature_channels, s, s)))
        self.lift_bias = self.add_param("lift.bias", np.zeros(feature_channels))
        self.gate_r = self.add_module("gate_r", SpatialGate(rng))
        self.gate_z = self.add_module("gate_z", SpatialGate(rng))
        self.merge = self.add_module("merge", Conv(rng, 2 * feature_channels, feature_channels, 3))

    def lift_hidden(self, h: Tensor, label: StyleLabel) -> Tensor:
        """Transposed conv of [h, label maps] onto the stage's grid."""
        n, _, hh, hw = h.shape
        maps = broadcast_label(label, hh, hw, batch=n, dtype=h.dtype)
        s = self.lift_stride
        return conv2d_transposed(concat_channels(h, maps), self.lift_weight, self.lift_bias, s, 0)

    def forward(self, x_l: Tensor, h: Tensor, label: StyleLabel) -> AsmOutput:
        h_hat = self.lift_hidden(h, label)
        if h_hat.shape != x_l.shape:
            raise DimensionError(f"lifted state {h_hat.shape} does not match stage feature {x_l.shape}")
        ones = Tensor(np.ones((x_l.shape[0], 1) + x_l.shape[2:], dtype=x_l.dtype))
        r = ones if self.disable_reset_gate else self.gate_r(h_hat, x_l)
        z = ones if self.disable_update_gate else self.gate_z(h_hat, x_l)
        h_tilde = tanh(self.merge(concat_channels(r * h_hat, x_l)))
        x_hat = z * h_tilde + (1.0 - z) * h_hat
        return AsmOutput(x_hat, h_hat, h_tilde, r, z)

    def fuse(self, x_l: Tensor, h: Tensor, label: StyleLabel) -> Tensor:
        return self.forward(x_l, h, label).x_hat

    __call__ = fuse
