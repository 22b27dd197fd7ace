"""Configuration records and the key-value config file loader.

Config files are YAML mappings. Keys are the field names of
:class:`GeneratorConfig`, :class:`DiscConfig`, :class:`LossWeights` and
:class:`TrainConfig`, either flat at the top level or grouped under
``generator:``, ``discriminator:``, ``losses:`` and ``train:``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .engine import ConfigurationError

ASM_STAGES = {"none": 0, "ASM1": 1, "ASM2": 2, "ASM3": 3}


@dataclass
class GeneratorConfig:
    base_channels: int = 32
    channel_cap: int = 256
    n_resblocks: int = 5
    downsample_stages: int = 4
    asm_placement: str = "ASM2"
    num_styles: int = 2
    slope: float = 0.2
    encoder_pad_mode: str = "reflect"
    decoder_norm: bool = False
    disable_reset_gate: bool = False
    disable_update_gate: bool = False

    def __post_init__(self):
        if self.asm_placement not in ASM_STAGES:
            raise ConfigurationError(f"asm_placement must be one of {list(ASM_STAGES)}")
        if self.downsample_stages < max(1, ASM_STAGES[self.asm_placement]):
            raise ConfigurationError("downsample_stages must be >= the ASM stage index")
        if self.num_styles < 1 or self.base_channels < 1:
            raise ConfigurationError("num_styles and base_channels must be positive")

    @property
    def asm_stage(self) -> int:
        return ASM_STAGES[self.asm_placement]

    def channels(self) -> list[int]:
        """Width after the stride-1 stem (index 0) and after each stride-2 stage."""
        return [min(self.base_channels * 2**i, self.channel_cap) for i in range(self.downsample_stages + 1)]

    @property
    def factor(self) -> int:
        return 2**self.downsample_stages


@dataclass
class DiscConfig:
    n_blocks: int = 6
    channels: list[int] = field(default_factory=lambda: [32, 64, 128, 256, 256, 512])
    scale_taps: list[int] = field(default_factory=lambda: [2, 4, 6])
    scale_weights: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0])
    num_styles: int = 2
    kernel: int = 5
    slope: float = 0.2
    sn_warmup_iters: int = 30

    def __post_init__(self):
        if len(self.channels) != self.n_blocks:
            raise ConfigurationError(f"need {self.n_blocks} channel widths, got {len(self.channels)}")
        taps = list(self.scale_taps)
        if not taps or any(b <= a for a, b in zip(taps, taps[1:])) or taps[0] < 1 or taps[-1] > self.n_blocks:
            raise ConfigurationError(f"scale_taps must be strictly increasing within 1..{self.n_blocks}")
        if len(self.scale_weights) != len(taps):
            raise ConfigurationError("scale_weights and scale_taps must have equal length")


@dataclass
class LossWeights:
    lambda_C: float = 90.0
    lambda_T: float = 100.0
    lambda_adv: float = 1.0
    transform_pool: int = 8

    def __post_init__(self):
        if min(self.lambda_C, self.lambda_T, self.lambda_adv) < 0:
            raise ConfigurationError("loss weights must be nonnegative")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    d_steps_per_g: int = 3
    resolution_schedule: list[list[int]] = field(default_factory=lambda: [[32, 1500], [64, 1500]])
    seed: int = 0
    reset_moments_on_resolution_change: bool = False
    checkpoint_every: int = 500
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscConfig = field(default_factory=DiscConfig)
    losses: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        self.resolution_schedule = [[int(r), int(s)] for r, s in self.resolution_schedule]
        if self.discriminator.num_styles != self.generator.num_styles:
            raise ConfigurationError("generator and discriminator disagree on num_styles")
        min_res = 2 ** (self.discriminator.n_blocks - 1)
        for res, steps in self.resolution_schedule:
            if res % self.generator.factor:
                raise ConfigurationError(f"resolution {res} not divisible by {self.generator.factor}")
            if res < min_res:
                raise ConfigurationError(f"resolution {res} below discriminator minimum {min_res}")
            if steps <= 0:
                raise ConfigurationError("phase step counts must be positive")
        if self.batch_size < 1 or self.d_steps_per_g < 1:
            raise ConfigurationError("batch_size and d_steps_per_g must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return build_config(d)


_SECTIONS = {
    "generator": GeneratorConfig,
    "discriminator": DiscConfig,
    "losses": LossWeights,
    "train": TrainConfig,
}


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def build_config(raw: dict[str, Any] | None, num_styles: int | None = None) -> TrainConfig:
    """Route flat or sectioned keys onto the config dataclasses."""
    raw = dict(raw or {})
    parts: dict[str, dict] = {k: {} for k in _SECTIONS}
    for sec in list(_SECTIONS):
        if isinstance(raw.get(sec), dict):
            parts[sec].update(raw.pop(sec))
    train_only = _field_names(TrainConfig) - set(_SECTIONS)
    for key, value in raw.items():
        owners = [sec for sec, cls in _SECTIONS.items() if key in _field_names(cls) and key not in _SECTIONS]
        if key == "num_styles":
            owners = ["generator", "discriminator"]
        if not owners:
            raise ConfigurationError(f"unknown config key {key!r}")
        if key in train_only:
            owners = ["train"]
        for sec in owners:
            parts[sec][key] = value
    if num_styles is not None:
        parts["generator"]["num_styles"] = num_styles
        parts["discriminator"]["num_styles"] = num_styles
    for sec, cls in _SECTIONS.items():
        unknown = set(parts[sec]) - _field_names(cls)
        if unknown:
            raise ConfigurationError(f"unknown keys in {sec}: {sorted(unknown)}")
    return TrainConfig(
        generator=GeneratorConfig(**parts["generator"]),
        discriminator=DiscConfig(**parts["discriminator"]),
        losses=LossWeights(**parts["losses"]),
        **{k: v for k, v in parts["train"].items() if k not in _SECTIONS},
    )


def load_config(path: str | Path | None, num_styles: int | None = None, **overrides) -> TrainConfig:
    raw: dict = {}
    if path is not None:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: config must be a key-value mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(raw, num_styles=num_styles)


def toy_config(**overrides) -> TrainConfig:
    """Desk-scale widths sized for CPU training in minutes."""
    raw = {
        "base_channels": 8,
        "channel_cap": 64,
        "channels": [8, 16, 32, 64, 64, 64],
    }
    raw.update(overrides)
    return build_config(raw)
