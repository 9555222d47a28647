"""Range coder, latent and weight streams, and the container format."""

from .bitstream import BitstreamError, BitstreamHeader, NetworkEntry, parse, serialize
from .latents import decode_latents, encode_latents
from .rangecoder import DecodeError, RangeDecoder, RangeEncoder, rc_decode, rc_encode
from .weights import QuantizedWeights, code_network, decode_network, quantize_network

__all__ = [
    "BitstreamError",
    "BitstreamHeader",
    "DecodeError",
    "NetworkEntry",
    "QuantizedWeights",
    "RangeDecoder",
    "RangeEncoder",
    "code_network",
    "decode_latents",
    "decode_network",
    "encode_latents",
    "parse",
    "quantize_network",
    "rc_decode",
    "rc_encode",
    "serialize",
]
