"""Multi-resolution latent pyramid and the quantization modes used in training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

QUANT_MODES = ("none", "noise", "ste_eps")


def level_shapes(height: int, width: int, n_levels: int) -> list[tuple[int, int]]:
    """Shapes of the pyramid levels: each one is the ceil-half of the previous."""
    if height < 1 or width < 1 or n_levels < 1:
        raise ValueError(f"invalid pyramid geometry {height}x{width}, L={n_levels}")
    shapes = [(height, width)]
    for _ in range(n_levels - 1):
        h, w = shapes[-1]
        shapes.append(((h + 1) // 2, (w + 1) // 2))
    return shapes


@dataclass
class LatentPyramid:
    levels: list[np.ndarray] = field(default_factory=list)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [lv.shape for lv in self.levels]

    @property
    def height(self) -> int:
        return self.levels[0].shape[0]

    @property
    def width(self) -> int:
        return self.levels[0].shape[1]

    def is_integer(self) -> bool:
        return all(np.array_equal(lv, np.round(lv)) for lv in self.levels)

    def rounded(self) -> "LatentPyramid":
        return LatentPyramid([quantize_round(lv) for lv in self.levels])

    def copy(self) -> "LatentPyramid":
        return LatentPyramid([lv.copy() for lv in self.levels])

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatentPyramid) or self.shapes != other.shapes:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))


def init_pyramid(height: int, width: int, n_levels: int) -> LatentPyramid:
    return LatentPyramid([np.zeros(s) for s in level_shapes(height, width, n_levels)])


def quantize_round(y):
    """Round to the nearest integer, ties away from zero."""
    q = np.copysign(np.floor(np.abs(y) + 0.5), y)
    if np.ndim(q) == 0:
        return int(q)
    return q + 0.0  # turn -0.0 into 0.0


def relax_noise(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Additive uniform noise in [-0.5, 0.5), the training proxy for rounding."""
    y = np.asarray(y)
    if y.dtype == np.float32:
        return y + (rng.random(y.shape, dtype=np.float32) - np.float32(0.5))
    return y + rng.uniform(-0.5, 0.5, size=y.shape)


def ste_eps_forward_backward(
    y: np.ndarray, epsilon: float
) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Hard rounding whose backward pass scales the upstream gradient by epsilon.

    With ``epsilon=1`` this is the classical straight-through estimator.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    y = np.asarray(y)
    rounded = quantize_round(y if y.dtype == np.float32 else y.astype(np.float64))

    def backward(grad: np.ndarray) -> np.ndarray:
        return epsilon * grad

    return rounded, backward


@dataclass(frozen=True)
class QuantMode:
    mode: str = "none"
    epsilon: float = 1e-2

    def __post_init__(self):
        if self.mode not in QUANT_MODES:
            raise ValueError(f"unknown quantization mode {self.mode!r}")
        if self.mode == "ste_eps" and not self.epsilon > 0:
            raise ValueError("ste_eps requires epsilon > 0")

    def apply(self, y: np.ndarray, rng: np.random.Generator | None = None):
        """Return (quantized value, gradient scale back to ``y``).

        ``none`` is used for evaluation and is hard rounding with no gradient.
        """
        if self.mode == "noise":
            if rng is None:
                raise ValueError("noise mode needs a random generator")
            return relax_noise(y, rng), 1.0
        if self.mode == "ste_eps":
            return quantize_round(y), self.epsilon
        return quantize_round(y), 0.0
