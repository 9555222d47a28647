"""The two decoder configurations and their layer tables."""

from __future__ import annotations

from dataclasses import dataclass

from .nn import LayerSpec


@dataclass(frozen=True)
class CodecConfig:
    name: str
    config_id: int
    arm_context: int
    synth_hidden: int
    n_residual: int
    n_levels: int = 7

    def arm_layers(self) -> list[LayerSpec]:
        c = self.arm_context
        return [
            LayerSpec("linear", c, c, "relu"),
            LayerSpec("linear", c, c, "relu"),
            LayerSpec("linear", c, 2),
        ]

    def synth_layers(self, n_levels: int | None = None) -> list[LayerSpec]:
        n = self.n_levels if n_levels is None else n_levels
        specs = [
            LayerSpec("conv_k1", n, self.synth_hidden, "relu"),
            LayerSpec("conv_k1", self.synth_hidden, 3, "relu"),
        ]
        for i in range(self.n_residual):
            last = i == self.n_residual - 1
            specs.append(LayerSpec("conv_k3", 3, 3, "none" if last else "relu", residual=True))
        return specs

    def upsampler_layers(self) -> list[LayerSpec]:
        return [LayerSpec("tconv_k8_s2", 1, 1)]


CONFIGS = {
    "main": CodecConfig("main", 0, arm_context=24, synth_hidden=40, n_residual=2),
    "light": CodecConfig("light", 1, arm_context=12, synth_hidden=18, n_residual=1),
}


def get_config(name: str) -> CodecConfig:
    try:
        return CONFIGS[name]
    except KeyError:
        raise ValueError(f"unknown config {name!r}, expected one of {sorted(CONFIGS)}") from None


def config_by_id(config_id: int) -> CodecConfig:
    for cfg in CONFIGS.values():
        if cfg.config_id == config_id:
            return cfg
    raise ValueError(f"unknown config id {config_id}")
