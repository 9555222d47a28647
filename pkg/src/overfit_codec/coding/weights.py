"""Quantization and entropy coding of network parameters.

Each network is quantized with a single step 2^-q and its integers are
coded under a zero-mean Laplace whose scale (the mean absolute integer
value) travels in the header as an unsigned 12.4 fixed-point number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..arm import laplace_rate_bits
from ..latent import quantize_round
from .entropy import WEIGHT_ALPHABET, decode_value, encode_value, laplace_table
from .rangecoder import DecodeError, RangeDecoder, RangeEncoder

Q_CANDIDATES = tuple(range(4, 13))
Q_RANGE = (0, 16)
SCALE_FRAC_BITS = 4
SCALE_MAX_FP = 0xFFFF


@dataclass(frozen=True)
class QuantizedWeights:
    q: int
    ints: np.ndarray
    scale_fp: int

    @property
    def step(self) -> float:
        return 2.0**-self.q

    @property
    def scale(self) -> float:
        return self.scale_fp / (1 << SCALE_FRAC_BITS)

    def dequantize(self) -> np.ndarray:
        return self.ints.astype(np.float64) * self.step

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QuantizedWeights)
            and self.q == other.q
            and self.scale_fp == other.scale_fp
            and np.array_equal(self.ints, other.ints)
        )


def scale_to_fixed(ints: np.ndarray) -> int:
    mad = float(np.mean(np.abs(ints))) if ints.size else 0.0
    return int(min(max(round(mad * (1 << SCALE_FRAC_BITS)), 1), SCALE_MAX_FP))


def quantize_weights(weights: np.ndarray, q: int) -> QuantizedWeights:
    if not Q_RANGE[0] <= q <= Q_RANGE[1]:
        raise ValueError(f"step exponent {q} outside {Q_RANGE}")
    ints = np.asarray(quantize_round(np.asarray(weights, dtype=np.float64) * 2.0**q)).astype(np.int64)
    return QuantizedWeights(q, ints, scale_to_fixed(ints))


def fits_alphabet(qw: QuantizedWeights) -> bool:
    lo, hi = WEIGHT_ALPHABET
    return bool(qw.ints.size == 0 or (qw.ints.min() >= lo and qw.ints.max() <= hi))


def weight_rate_bits(qw: QuantizedWeights) -> float:
    """Estimated bits of the coded integers (16-bit probability floor)."""
    if qw.ints.size == 0:
        return 0.0
    return float(np.sum(laplace_rate_bits(qw.ints.astype(np.float64), (0.0, qw.scale))))


def quantize_network(
    weights: np.ndarray,
    evaluate: Callable[[np.ndarray], float],
    lam: float,
    n_pixels: int,
    candidates: Iterable[int] = Q_CANDIDATES,
) -> QuantizedWeights:
    """Pick the step minimizing ``evaluate(dequantized) + lam * weight bpp``.

    ``evaluate`` re-runs the rate-distortion loss with the requantized
    weights in place. Ties keep the coarser step.
    """
    best, best_cost = None, np.inf
    for q in candidates:
        qw = quantize_weights(weights, q)
        if not fits_alphabet(qw):
            continue
        cost = evaluate(qw.dequantize()) + lam * weight_rate_bits(qw) / n_pixels
        if cost < best_cost:
            best, best_cost = qw, cost
    if best is None:
        raise ValueError("no candidate step can represent these weights")
    return best


def code_network(qw: QuantizedWeights) -> bytes:
    lo, hi = WEIGHT_ALPHABET
    table = laplace_table(0.0, qw.scale, lo, hi)
    enc = RangeEncoder()
    for v in qw.ints.tolist():
        encode_value(enc, table, v)
    return enc.finish()


def decode_network(data: bytes, count: int, q: int, scale_fp: int) -> QuantizedWeights:
    lo, hi = WEIGHT_ALPHABET
    table = laplace_table(0.0, scale_fp / (1 << SCALE_FRAC_BITS), lo, hi)
    dec = RangeDecoder(data)
    ints = np.array([decode_value(dec, table) for _ in range(count)], dtype=np.int64)
    if not dec.exhausted():
        raise DecodeError("weight stream longer than its network")
    return QuantizedWeights(q, ints, scale_fp)
