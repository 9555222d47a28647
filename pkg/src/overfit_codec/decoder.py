"""Bitstream -> image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding.bitstream import BitstreamHeader, parse
from .coding.latents import decode_latents
from .coding.weights import QuantizedWeights, decode_network
from .config import config_by_id
from .imageio import quantize_image
from .latent import LatentPyramid, level_shapes
from .model import NETWORK_NAMES, CodecModel


@dataclass
class DecodedImage:
    image: np.ndarray  # (3, H, W), on the 8-bit grid
    header: BitstreamHeader
    model: CodecModel
    pyramid: LatentPyramid
    weights: dict[str, QuantizedWeights]


def decode_bitstream(data: bytes) -> DecodedImage:
    header, streams = parse(data)
    config = config_by_id(header.config_id)
    model = CodecModel(config, header.n_levels)
    weights = {}
    for name, entry, stream in zip(NETWORK_NAMES, header.networks, streams):
        qw = decode_network(stream, model.n_weights(name), entry.q, entry.scale_fp)
        model.set_flat(name, qw.dequantize())
        weights[name] = qw
    shapes = level_shapes(header.height, header.width, header.n_levels)
    pyramid = decode_latents(streams[len(NETWORK_NAMES):], model.arm, shapes, header.level_zero)
    image = quantize_image(model.synthesize(pyramid.levels))
    return DecodedImage(image, header, model, pyramid, weights)
