"""The three overfitted networks of one image, bundled together."""

from __future__ import annotations

import numpy as np

from .arm import ArmNet
from .config import CodecConfig, get_config
from .nn import Param
from .synthesis import SynthNet
from .upsampler import Upsampler

NETWORK_NAMES = ("arm", "upsampler", "synthesis")


class CodecModel:
    def __init__(self, config: CodecConfig | str = "main", n_levels: int | None = None,
                 rng: np.random.Generator | None = None):
        if isinstance(config, str):
            config = get_config(config)
        self.config = config
        self.n_levels = config.n_levels if n_levels is None else n_levels
        self.arm = ArmNet(config.arm_context, rng)
        self.upsampler = Upsampler()
        self.synthesis = SynthNet(config, self.n_levels, rng)

    def network_params(self, name: str) -> list[Param]:
        if name == "arm":
            return self.arm.params
        if name == "upsampler":
            return self.upsampler.params
        if name == "synthesis":
            return self.synthesis.params
        raise KeyError(name)

    @property
    def params(self) -> list[Param]:
        return [p for name in NETWORK_NAMES for p in self.network_params(name)]

    def astype(self, dtype) -> None:
        """Convert every parameter in place, e.g. to float32 for training."""
        for p in self.params:
            p.astype(dtype)

    def get_flat(self, name: str) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.network_params(name)])

    def set_flat(self, name: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        params = self.network_params(name)
        total = sum(p.value.size for p in params)
        if values.shape != (total,):
            raise ValueError(f"{name} expects {total} values, got {values.shape}")
        start = 0
        for p in params:
            p.value[...] = values[start:start + p.value.size].reshape(p.value.shape)
            start += p.value.size

    def n_weights(self, name: str) -> int:
        return sum(p.value.size for p in self.network_params(name))

    def synthesize(self, levels: list[np.ndarray]) -> np.ndarray:
        """Decoder-side reconstruction (unclamped) from latent levels."""
        return self.synthesis.forward(self.upsampler.forward(levels))
