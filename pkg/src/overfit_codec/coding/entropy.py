"""Discretized Laplace frequency tables and symbol coding with an escape.

A table holds explicit 16-bit frequencies for the integers of a window
around the mean, clipped to the alphabet bounds. The window covers every
integer whose probability is large enough to round to a non-zero count;
anything else is sent as an escape symbol followed by the raw value on 16
bits. The escape symbol sits at the bottom of the cumulative table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..arm import laplace_interval_prob
from .rangecoder import TOTAL, RangeDecoder, RangeEncoder

LATENT_ALPHABET = (-256, 255)
WEIGHT_ALPHABET = (-32768, 32767)
RAW_BITS = 16
RAW_OFFSET = 1 << (RAW_BITS - 1)
MAX_WINDOW_HALF = 8191


@dataclass(frozen=True)
class SymbolTable:
    kmin: int
    cum: np.ndarray  # cum[0] = 0, escape is [0, cum[1]), value kmin + j is [cum[j+1], cum[j+2])

    @property
    def kmax(self) -> int:
        return self.kmin + len(self.cum) - 3

    def interval(self, value: int) -> tuple[int, int] | None:
        """(cum, freq) of an explicit value, ``None`` when it needs an escape."""
        if self.kmin <= value <= self.kmax:
            j = value - self.kmin + 1
            return int(self.cum[j]), int(self.cum[j + 1] - self.cum[j])
        return None

    @property
    def escape_freq(self) -> int:
        return int(self.cum[1])


def _lower_tail(x: float, mu: float, b: float) -> float:
    """P(Y < x) for Y ~ Laplace(mu, b)."""
    if x < mu:
        return 0.5 * math.exp((x - mu) / b)
    return 1.0 - 0.5 * math.exp(-(x - mu) / b)


def _rebalance(freq: np.ndarray) -> np.ndarray:
    """Nudge counts by +-1, largest first, until they sum to TOTAL (all stay >= 1)."""
    diff = TOTAL - int(freq.sum())
    while diff != 0:
        step = 1 if diff > 0 else -1
        order = np.argsort(-freq, kind="stable")
        if step < 0:
            order = order[freq[order] > 1]
        take = order[: abs(diff)]
        freq[take] += step
        diff -= step * len(take)
    return freq


def laplace_table(mu: float, b: float, lo: int, hi: int) -> SymbolTable:
    """Frequency table of Laplace(mu, b) over the integers of [lo, hi]."""
    if not (math.isfinite(mu) and math.isfinite(b) and b > 0):
        raise ValueError(f"invalid Laplace parameters mu={mu}, b={b}")
    half = 0.5 + b * math.log(TOTAL * min(1.0, 1.0 / b))
    half = min(max(half, 0.5), MAX_WINDOW_HALF)
    centre = round(mu)
    kmin = max(lo, math.ceil(mu - half), centre - MAX_WINDOW_HALF)
    kmax = min(hi, math.floor(mu + half), centre + MAX_WINDOW_HALF)
    if kmin > kmax:
        return SymbolTable(0, np.array([0, TOTAL], dtype=np.int64))
    ks = np.arange(kmin, kmax + 1, dtype=np.float64)
    p = laplace_interval_prob(ks, mu, b)
    p_esc = _lower_tail(kmin - 0.5, mu, b) + 1.0 - _lower_tail(kmax + 0.5, mu, b)
    freq = np.empty(len(ks) + 1, dtype=np.int64)
    freq[0] = max(1, round(p_esc * TOTAL))
    freq[1:] = np.maximum(1, np.rint(p * TOTAL)).astype(np.int64)
    freq = _rebalance(freq)
    cum = np.zeros(len(freq) + 1, dtype=np.int64)
    np.cumsum(freq, out=cum[1:])
    return SymbolTable(int(kmin), cum)


def encode_value(enc: RangeEncoder, table: SymbolTable, value: int) -> None:
    iv = table.interval(value)
    if iv is not None:
        enc.encode(*iv)
        return
    raw = value + RAW_OFFSET
    if not 0 <= raw < (1 << RAW_BITS):
        raise ValueError(f"value {value} does not fit the {RAW_BITS}-bit escape")
    enc.encode(0, table.escape_freq)
    enc.encode((raw >> 8) << 8, 256)
    enc.encode((raw & 0xFF) << 8, 256)


def decode_value(dec: RangeDecoder, table: SymbolTable) -> int:
    cum = table.cum
    j = int(np.searchsorted(cum, dec.target(), side="right")) - 1
    dec.consume(int(cum[j]), int(cum[j + 1] - cum[j]))
    if j > 0:
        return table.kmin + j - 1
    hi = dec.target() >> 8
    dec.consume(hi << 8, 256)
    lo = dec.target() >> 8
    dec.consume(lo << 8, 256)
    return ((hi << 8) | lo) - RAW_OFFSET
