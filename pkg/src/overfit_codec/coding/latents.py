"""Entropy coding of the latent pyramid, driven by the ARM.

Samples are coded in raster order within each level, one independent
stream per level. The encoder evaluates the ARM one sample at a time with
the very same routine as the decoder, so (mu, b) and therefore the
frequency tables are bit-identical on both sides.
"""

from __future__ import annotations

import numpy as np

from ..arm import B_MIN, ArmNet, context_offsets, template_reach
from ..latent import LatentPyramid
from .entropy import LATENT_ALPHABET, decode_value, encode_value, laplace_table
from .rangecoder import DecodeError, RangeDecoder, RangeEncoder


class _SampleArm:
    """Single-context ARM evaluation shared by the encoder and the decoder."""

    def __init__(self, net: ArmNet):
        lin = [layer for layer in net.layers if hasattr(layer, "weight")]
        # always float64 so that encoder and decoder agree bit for bit
        self.w = [layer.weight.value.astype(np.float64) for layer in lin]
        self.b = [layer.bias.value.astype(np.float64) for layer in lin]

    def __call__(self, ctx: np.ndarray) -> tuple[float, float]:
        h = np.maximum(self.w[0] @ ctx + self.b[0], 0.0)
        h = np.maximum(self.w[1] @ h + self.b[1], 0.0)
        out = self.w[2] @ h + self.b[2]
        mu = float(out[0])
        b = max(float(np.exp(out[1])), B_MIN)
        if not (np.isfinite(mu) and np.isfinite(b)):
            raise FloatingPointError("ARM produced a non-finite distribution")
        return mu, b


class _LevelBuffer:
    """Zero-padded copy of a level with per-sample causal-context lookup."""

    def __init__(self, shape: tuple[int, int], context_size: int):
        h, w = shape
        self.shape = shape
        self.top, self.side = template_reach(context_size)
        self.stride = w + 2 * self.side
        self.buf = np.zeros((h + self.top) * self.stride)
        self.offsets = np.array([dr * self.stride + dc for dr, dc in context_offsets(context_size)])

    def pos(self, r: int, c: int) -> int:
        return (r + self.top) * self.stride + c + self.side

    def context(self, pos: int) -> np.ndarray:
        return self.buf[pos + self.offsets]

    def level(self) -> np.ndarray:
        h, w = self.shape
        grid = self.buf.reshape(h + self.top, self.stride)
        return grid[self.top:, self.side:self.side + w].copy()


def encode_level(level: np.ndarray, net: ArmNet) -> bytes:
    values = np.asarray(level, dtype=np.float64)
    if not np.array_equal(values, np.round(values)):
        raise ValueError("latent levels must hold integers")
    lo, hi = LATENT_ALPHABET
    arm = _SampleArm(net)
    buf = _LevelBuffer(values.shape, net.context_size)
    h, w = values.shape
    grid = buf.buf.reshape(h + buf.top, buf.stride)
    grid[buf.top:, buf.side:buf.side + w] = values
    enc = RangeEncoder()
    for r in range(h):
        for c in range(w):
            pos = buf.pos(r, c)
            mu, b = arm(buf.context(pos))
            encode_value(enc, laplace_table(mu, b, lo, hi), int(buf.buf[pos]))
    return enc.finish()


def decode_level(data: bytes, shape: tuple[int, int], net: ArmNet) -> np.ndarray:
    lo, hi = LATENT_ALPHABET
    arm = _SampleArm(net)
    buf = _LevelBuffer(shape, net.context_size)
    dec = RangeDecoder(data)
    h, w = shape
    for r in range(h):
        for c in range(w):
            pos = buf.pos(r, c)
            mu, b = arm(buf.context(pos))
            buf.buf[pos] = decode_value(dec, laplace_table(mu, b, lo, hi))
    if not dec.exhausted():
        raise DecodeError("trailing bytes after the last latent")
    return buf.level()


def encode_latents(pyramid: LatentPyramid, net: ArmNet) -> tuple[list[bytes], list[bool]]:
    """Per-level streams and all-zero flags; flagged levels get an empty stream."""
    streams, zero = [], []
    for level in pyramid.levels:
        is_zero = not np.any(level)
        zero.append(is_zero)
        streams.append(b"" if is_zero else encode_level(level, net))
    return streams, zero


def decode_latents(
    streams: list[bytes], net: ArmNet, shapes: list[tuple[int, int]], zero_flags: list[bool]
) -> LatentPyramid:
    levels = []
    for idx, (data, shape, is_zero) in enumerate(zip(streams, shapes, zero_flags)):
        if is_zero:
            if data:
                raise DecodeError(f"level {idx}: all-zero level carries {len(data)} bytes")
            levels.append(np.zeros(shape))
            continue
        try:
            levels.append(decode_level(data, shape, net))
        except DecodeError as exc:
            raise DecodeError(f"level {idx}: {exc}") from exc
    return LatentPyramid(levels)
