from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StyleLabel:
    """Artist class ``index`` out of ``num_styles`` artists."""

    index: int
    num_styles: int

    def __post_init__(self):
        if self.num_styles < 1:
            raise ValueError("num_styles must be positive")
        if not 0 <= self.index < self.num_styles:
            raise ValueError(f"style index {self.index} outside [0, {self.num_styles})")

    def one_hot(self, dtype=np.float64) -> np.ndarray:
        v = np.zeros(self.num_styles, dtype=dtype)
        v[self.index] = 1.0
        return v
