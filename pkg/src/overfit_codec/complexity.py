"""Decoder complexity in multiplications per decoded pixel.

Only multiplications are counted; bias additions and activations are
free. The ARM runs once per latent sample, the upsampler costs 16
multiplications per produced sample at every x2 stage, and the synthesis
runs once per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import CodecConfig, get_config
from .latent import level_shapes


@dataclass(frozen=True)
class ComplexityReport:
    arm: float
    upsampling: float
    synthesis: float

    @property
    def total(self) -> float:
        return self.arm + self.upsampling + self.synthesis

    def as_table(self, config_name: str = "") -> str:
        title = f"Complexity [kMAC / decoded pixel]{' - ' + config_name if config_name else ''}"
        rows = [
            ("ARM", self.arm),
            ("Upsampling", self.upsampling),
            ("Synthesis", self.synthesis),
            ("Total", self.total),
        ]
        lines = [title, f"{'module':<12}{'MAC/pix':>10}{'kMAC/pix':>10}"]
        lines += [f"{name:<12}{v:>10.1f}{v / 1000:>10.2f}" for name, v in rows]
        return "\n".join(lines)


def count_macs(config: CodecConfig | str, height: int | None = None, width: int | None = None,
               n_levels: int | None = None) -> ComplexityReport:
    """MAC/pixel of one configuration.

    Without an image size the dyadic limit is reported (level l holds
    4^-l samples per pixel); with one, exact per-level sample counts are used.
    """
    if isinstance(config, str):
        config = get_config(config)
    n_levels = config.n_levels if n_levels is None else n_levels
    arm_per_sample = sum(s.macs_per_output_sample for s in config.arm_layers())
    synth = float(sum(s.macs_per_output_sample for s in config.synth_layers(n_levels)))
    tconv = config.upsampler_layers()[0].macs_per_output_sample

    if height is None or width is None:
        density = [4.0**-lvl for lvl in range(n_levels)]
    else:
        shapes = level_shapes(height, width, n_levels)
        density = [h * w / (height * width) for h, w in shapes]

    arm = arm_per_sample * sum(density)
    # level l goes through stages producing levels l-1, ..., 0
    upsampling = tconv * sum(sum(density[:lvl]) for lvl in range(1, n_levels))
    return ComplexityReport(arm, upsampling, synth)
