"""Byte-oriented range coder with 32-bit state and 16-bit probabilities.

The encoder keeps ``low`` below 2^32 and propagates carries directly into
the bytes already written; the decoder tracks ``code = value - low``. Both
renormalize whenever ``range`` drops below 2^24, so every byte the encoder
emits is consumed by exactly one decoder shift. The final flush writes the
four bytes of ``low``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = (1 << 32) - 1


class DecodeError(ValueError):
    """Raised when a stream is truncated or inconsistent with its models."""


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.out = bytearray()

    def encode(self, cum: int, freq: int) -> None:
        """Code the interval [cum, cum + freq) of a 2^16 total."""
        r = self.range >> PRECISION
        self.low += r * cum
        self.range = r * freq
        if self.low > _MASK32:
            self.low &= _MASK32
            self._carry()
        while self.range < _TOP:
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK32
            self.range <<= 8

    def _carry(self) -> None:
        i = len(self.out) - 1
        while self.out[i] == 0xFF:
            self.out[i] = 0
            i -= 1
        self.out[i] += 1

    def finish(self) -> bytes:
        self.out += self.low.to_bytes(4, "big")
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("range coder read past the end of its stream")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def target(self) -> int:
        """Position of the code value inside [0, 2^16)."""
        self._r = self.range >> PRECISION
        return min(self.code // self._r, TOTAL - 1)

    def consume(self, cum: int, freq: int) -> None:
        """Advance past the symbol [cum, cum + freq) found from :meth:`target`."""
        r = self._r
        self.code -= r * cum
        self.range = r * freq
        if not 0 <= self.code < self.range:
            raise DecodeError("symbol interval inconsistent with the code value")
        while self.range < _TOP:
            self.code = (self.code << 8) | self._byte()
            self.range <<= 8

    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def check_cdf(cdf: Sequence[int]) -> None:
    cdf = np.asarray(cdf)
    if cdf[0] != 0 or cdf[-1] != TOTAL or np.any(np.diff(cdf) <= 0):
        raise ValueError("CDF must start at 0, end at 2^16 and be strictly increasing")


def rc_encode(symbols: Sequence[int], cdfs: Sequence[Sequence[int]]) -> bytes:
    """Code ``symbols[i]`` with the cumulative table ``cdfs[i]``.

    Each table has one more entry than its alphabet: ``cdf[s]`` and
    ``cdf[s + 1]`` bound symbol ``s``.
    """
    if len(symbols) != len(cdfs):
        raise ValueError("one CDF per symbol is required")
    enc = RangeEncoder()
    for s, cdf in zip(symbols, cdfs):
        lo, hi = int(cdf[s]), int(cdf[s + 1])
        enc.encode(lo, hi - lo)
    return enc.finish()


def rc_decode(data: bytes, cdfs: Sequence[Sequence[int]]) -> list[int]:
    dec = RangeDecoder(data)
    out = []
    for cdf in cdfs:
        cdf = np.asarray(cdf)
        s = int(np.searchsorted(cdf, dec.target(), side="right")) - 1
        dec.consume(int(cdf[s]), int(cdf[s + 1] - cdf[s]))
        out.append(s)
    if not dec.exhausted():
        raise DecodeError("trailing bytes after the last symbol")
    return out
