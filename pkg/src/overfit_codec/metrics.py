"""Image quality and rate-distortion comparison metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB of [0, 1]-scaled images; ``math.inf`` when they are identical."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return -10.0 * math.log10(err)


@dataclass(frozen=True)
class RdPoint:
    rate: float  # bits per pixel
    psnr: float


class RdCurve:
    """At least four (rate, PSNR) points, sorted by strictly increasing rate."""

    def __init__(self, points: Sequence[RdPoint] | Sequence[tuple[float, float]]):
        pts = sorted((p if isinstance(p, RdPoint) else RdPoint(*p) for p in points),
                     key=lambda p: p.rate)
        if len(pts) < 4:
            raise ValueError(f"an RD curve needs at least 4 points, got {len(pts)}")
        rates = np.array([p.rate for p in pts])
        if np.any(rates <= 0):
            raise ValueError("rates must be positive")
        if np.any(np.diff(rates) <= 0):
            raise ValueError("rates must be strictly increasing")
        self.points = pts

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def bd_rate(anchor: RdCurve, test: RdCurve) -> float:
    """Average rate difference (%) of ``test`` vs ``anchor`` at equal PSNR.

    log10(rate) is fitted as a cubic in PSNR for both curves and the fits
    are integrated over the common PSNR range. Negative means ``test``
    needs less rate.
    """
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if not hi > lo:
        raise ValueError("the two curves have no PSNR overlap")
    fits = [np.polyfit(c.psnrs, np.log10(c.rates), 3) for c in (anchor, test)]
    integrals = []
    for fit in fits:
        prim = np.polyint(fit)
        integrals.append(np.polyval(prim, hi) - np.polyval(prim, lo))
    avg_diff = (integrals[1] - integrals[0]) / (hi - lo)
    return (10.0**avg_diff - 1.0) * 100.0
