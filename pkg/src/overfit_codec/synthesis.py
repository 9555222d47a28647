"""Synthesis network: pointwise layers followed by residual 3x3 post-filters."""

from __future__ import annotations

import numpy as np

from .config import CodecConfig, get_config
from .nn import Conv2d, Param, relu, relu_backward


class SynthNet:
    """Maps the (L, H, W) dense latent to a (3, H, W) image in [0, 1] scale.

    Residual layers compute ``x + conv3x3(x)``; the ReLU of a non-final
    residual layer sits inside the branch, i.e. ``x + relu(conv3x3(x))``.
    Residual kernels start at zero so the post-filters are initially the
    identity.
    """

    def __init__(self, config: CodecConfig | str = "main", n_levels: int | None = None,
                 rng: np.random.Generator | None = None):
        if isinstance(config, str):
            config = get_config(config)
        self.config = config
        self.specs = config.synth_layers(n_levels)
        self.in_channels = self.specs[0].in_features
        self.layers = []
        for spec in self.specs:
            k = 3 if spec.kind == "conv_k3" else 1
            self.layers.append(Conv2d(spec.in_features, spec.out_features, k, rng, zero=spec.residual))
        self._cache = None

    @property
    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, z: np.ndarray) -> np.ndarray:
        if z.ndim != 3 or z.shape[0] != self.in_channels:
            raise ValueError(f"synthesis expects {self.in_channels} input channels, got {z.shape}")
        cache = []
        x = z
        for spec, layer in zip(self.specs, self.layers):
            pre = layer.forward(x)
            act = relu(pre) if spec.activation == "relu" else pre
            cache.append(pre)
            x = x + act if spec.residual else act
        self._cache = cache
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("SynthNet.backward called before forward")
        cache, self._cache = self._cache, None
        g = grad_out
        for spec, layer, pre in zip(reversed(self.specs), reversed(self.layers), reversed(cache)):
            g_act = relu_backward(pre, g) if spec.activation == "relu" else g
            g_in = layer.backward(g_act)
            g = g + g_in if spec.residual else g_in
        return g


def build_synth(config: CodecConfig | str = "main", n_levels: int | None = None,
                rng: np.random.Generator | None = None) -> SynthNet:
    return SynthNet(config, n_levels, rng if rng is not None else np.random.default_rng(0))


def synth_forward(net: SynthNet, z: np.ndarray) -> np.ndarray:
    return net.forward(z)
