"""Named parameter containers shared by the generator and discriminator."""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from .engine import Tensor, conv2d, get_default_dtype, instance_norm, leaky_relu


class Module:
    """Holds named leaf parameters and child modules.

    Names are dotted paths (``enc.0.weight``) and form the checkpoint keys.
    """

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(value, dtype=get_default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = np.array(arr, dtype=p.dtype, order="C")

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for child in self._children.values():
            child._astype_extra(dtype)
        self._astype_extra(dtype)
        return self

    def _astype_extra(self, dtype) -> None:
        """Hook for non-parameter state (e.g. power-iteration vectors)."""

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def he_normal(rng: np.random.Generator, shape: tuple, slope: float = 0.2) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    std = math.sqrt(2.0 / ((1.0 + slope**2) * fan_in))
    return rng.normal(0.0, std, size=shape)


class Conv(Module):
    def __init__(self, rng, cin, cout, k, stride=1, pad_mode="reflect", zero_init=False):
        super().__init__()
        self.stride, self.padding, self.pad_mode = stride, k // 2, pad_mode
        w = np.zeros((cout, cin, k, k)) if zero_init else he_normal(rng, (cout, cin, k, k))
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.pad_mode)


class ConvNormAct(Module):
    """conv -> instance norm -> LeakyReLU."""

    def __init__(self, rng, cin, cout, k=3, stride=1, pad_mode="reflect", slope=0.2, zero_init=False):
        super().__init__()
        self.slope = slope
        self.conv = self.add_module("conv", Conv(rng, cin, cout, k, stride, pad_mode, zero_init))
        self.gamma = self.add_param("gamma", np.ones(cout))
        self.beta = self.add_param("beta", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return leaky_relu(instance_norm(self.conv(x), self.gamma, self.beta), self.slope)


class ConvAct(Module):
    """conv -> LeakyReLU, no normalization."""

    def __init__(self, rng, cin, cout, k=3, stride=1, pad_mode="reflect", slope=0.2):
        super().__init__()
        self.slope = slope
        self.conv = self.add_module("conv", Conv(rng, cin, cout, k, stride, pad_mode))

    def __call__(self, x: Tensor) -> Tensor:
        return leaky_relu(self.conv(x), self.slope)
