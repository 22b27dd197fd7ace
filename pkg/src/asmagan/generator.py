"""Conditional generator: encoder -> residual blocks (+ CIN block) -> decoder.

The optional Anisotropic Stroke Module replaces the decoder feature at its
resolution with the fused tensor, so decoder stages coarser than the ASM
stage are not built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asm import AnisotropicStrokeModule
from .config import GeneratorConfig
from .engine import (
    DimensionError,
    StyleLabel,
    Tensor,
    cond_instance_norm,
    leaky_relu,
    tanh,
    upsample_nearest,
)
from .nn import Conv, ConvAct, ConvNormAct, Module


@dataclass
class EncoderFeatures:
    stages: list[Tensor]  # stage l at index l-1, resolution 1/2**l
    h: Tensor

    def stage(self, level: int) -> Tensor:
        return self.stages[level - 1]


class ResBlock(Module):
    """x + (conv3-IN-LReLU x2); last conv starts at zero so the block is identity."""

    def __init__(self, rng, channels: int, slope: float):
        super().__init__()
        self.a = self.add_module("a", ConvNormAct(rng, channels, channels, 3, slope=slope))
        self.b = self.add_module("b", ConvNormAct(rng, channels, channels, 3, slope=slope, zero_init=True))

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.b(self.a(x))


class CondResBlock(Module):
    """Residual block whose normalizations are conditional on the style label."""

    def __init__(self, rng, channels: int, num_styles: int, slope: float):
        super().__init__()
        self.slope = slope
        self.conv_a = self.add_module("conv_a", Conv(rng, channels, channels, 3))
        self.conv_b = self.add_module("conv_b", Conv(rng, channels, channels, 3, zero_init=True))
        self.gammas_a = self.add_param("gammas_a", np.ones((num_styles, channels)))
        self.betas_a = self.add_param("betas_a", np.zeros((num_styles, channels)))
        self.gammas_b = self.add_param("gammas_b", np.ones((num_styles, channels)))
        self.betas_b = self.add_param("betas_b", np.zeros((num_styles, channels)))

    def cin_tables(self) -> list[Tensor]:
        return [self.gammas_a, self.betas_a, self.gammas_b, self.betas_b]

    def __call__(self, x: Tensor, label: StyleLabel) -> Tensor:
        y = leaky_relu(cond_instance_norm(self.conv_a(x), self.gammas_a, self.betas_a, label), self.slope)
        y = leaky_relu(cond_instance_norm(self.conv_b(y), self.gammas_b, self.betas_b, label), self.slope)
        return x + y


class Generator(Module):
    def __init__(self, config: GeneratorConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        ch = config.channels()
        d = config.downsample_stages
        slope = config.slope
        self.stem = self.add_module("enc0", ConvNormAct(rng, 3, ch[0], 3, 1, config.encoder_pad_mode, slope))
        self.down = [
            self.add_module(f"enc{l}", ConvNormAct(rng, ch[l - 1], ch[l], 3, 2, config.encoder_pad_mode, slope))
            for l in range(1, d + 1)
        ]
        self.resblocks = [self.add_module(f"res{i}", ResBlock(rng, ch[d], slope)) for i in range(config.n_resblocks)]
        self.cond_block = self.add_module("cres", CondResBlock(rng, ch[d], config.num_styles, slope))
        self.asm = None
        top = d
        if config.asm_stage:
            a = config.asm_stage
            self.asm = self.add_module(
                "asm",
                AnisotropicStrokeModule(
                    rng, ch[d], ch[a], config.num_styles, a, d,
                    config.disable_reset_gate, config.disable_update_gate,
                ),
            )
            top = a
        # up{l}: 1/2**l -> 1/2**(l-1), width ch[l] -> ch[l-1]
        # decoder convs are unnormalized by default: an IN here would undo the per-channel shifts CIN injects
        block = ConvNormAct if config.decoder_norm else ConvAct
        self.up = {l: self.add_module(f"dec{l}", block(rng, ch[l], ch[l - 1], 3, slope=slope)) for l in range(top, 0, -1)}
        self.color = self.add_module("color", Conv(rng, ch[0], 3, 3))

    # -- stages --------------------------------------------------------------

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected N x 3 x H x W image, got {x.shape}")
        f = self.config.factor
        if x.shape[2] % f or x.shape[3] % f:
            raise DimensionError(f"image {x.shape[2]}x{x.shape[3]} not divisible by {f}; pad or crop first")

    def encode(self, x_c: Tensor) -> EncoderFeatures:
        self.check_input(x_c)
        y = self.stem(x_c)
        stages = []
        for layer in self.down:
            y = layer(y)
            stages.append(y)
        return EncoderFeatures(stages, y)

    def bottleneck(self, h: Tensor, label: StyleLabel) -> Tensor:
        for block in self.resblocks:
            h = block(h)
        return self.cond_block(h, label)

    def decode(self, features: Tensor, skip: Tensor | None = None) -> Tensor:
        """Upsample from 1/2**D back to full resolution; ``skip`` is the ASM output."""
        d = self.config.downsample_stages
        if self.asm is None:
            if skip is not None:
                raise DimensionError("skip given but no ASM placement configured")
            y, start = features, d
        else:
            a = self.asm.stage
            if skip is None:
                raise DimensionError("ASM placement configured but no fused tensor given")
            want = (features.shape[0], self.config.channels()[a], features.shape[2] * 2 ** (d - a), features.shape[3] * 2 ** (d - a))
            if skip.shape != want:
                raise DimensionError(f"skip shape {skip.shape} != {want}")
            y, start = skip, a
        for l in range(start, 0, -1):
            y = self.up[l](upsample_nearest(y, 2))
        return tanh(self.color(y))

    def generate_with_features(self, x_c: Tensor, label: StyleLabel) -> tuple[Tensor, EncoderFeatures]:
        feats = self.encode(x_c)
        b = self.bottleneck(feats.h, label)
        skip = self.asm.fuse(feats.stage(self.asm.stage), b, label) if self.asm is not None else None
        return self.decode(b, skip), feats

    def generate(self, x_c: Tensor, label: StyleLabel) -> Tensor:
        return self.generate_with_features(x_c, label)[0]

    __call__ = generate

    def cin_tables(self) -> list[Tensor]:
        return self.cond_block.cin_tables()
