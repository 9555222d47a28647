"""Autoregressive probability model for the latent samples.

Each latent sample is modelled by a Laplace distribution whose location and
scale are predicted by a small MLP from already-decoded neighbours of the
same level (raster order). The causal neighbourhood is a fixed template,
identical on the encoder and decoder side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .latent import LatentPyramid, QuantMode
from .nn import Linear, Param, ReLU

B_MIN = 1e-3
PROB_FLOOR = 2.0**-16
MAX_BITS = 16.0
_LN2 = math.log(2.0)


def _template(rows: int, half_width: int, left: int) -> tuple[tuple[int, int], ...]:
    offsets = [(dr, dc) for dr in range(-rows, 0) for dc in range(-half_width, half_width + 1)]
    offsets += [(0, -k) for k in range(1, left + 1)]
    # nearest first; ties broken by row then column
    return tuple(sorted(offsets, key=lambda o: (o[0] ** 2 + o[1] ** 2, o[0], o[1])))


CONTEXT_TEMPLATES = {
    24: _template(rows=3, half_width=3, left=3),
    12: _template(rows=2, half_width=2, left=2),
}


def context_offsets(context_size: int) -> tuple[tuple[int, int], ...]:
    try:
        return CONTEXT_TEMPLATES[context_size]
    except KeyError:
        raise ValueError(f"context size must be 12 or 24, got {context_size}") from None


def template_reach(context_size: int) -> tuple[int, int]:
    """(rows above, columns to either side) covered by the template."""
    offs = context_offsets(context_size)
    return max(-dr for dr, _ in offs), max(abs(dc) for _, dc in offs)


def extract_context(level: np.ndarray, row: int, col: int, context_size: int) -> np.ndarray:
    """Causal neighbours of (row, col); positions outside the grid read 0."""
    h, w = level.shape
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"position ({row}, {col}) outside {h}x{w} level")
    out = np.zeros(context_size)
    for n, (dr, dc) in enumerate(context_offsets(context_size)):
        r, c = row + dr, col + dc
        if 0 <= r < h and 0 <= c < w:
            out[n] = level[r, c]
    return out


def _padded(level: np.ndarray, context_size: int) -> tuple[np.ndarray, int, int]:
    rows, cols = template_reach(context_size)
    return np.pad(level, ((rows, 0), (cols, cols))), rows, cols


def gather_contexts(level: np.ndarray, context_size: int) -> np.ndarray:
    """Contexts of every position of ``level`` in raster order, shape (h*w, C)."""
    h, w = level.shape
    pad, r0, c0 = _padded(level, context_size)
    out = np.empty((h * w, context_size), dtype=level.dtype)
    for n, (dr, dc) in enumerate(context_offsets(context_size)):
        out[:, n] = pad[r0 + dr:r0 + dr + h, c0 + dc:c0 + dc + w].ravel()
    return out


def scatter_context_grad(grad_ctx: np.ndarray, shape: tuple[int, int], context_size: int) -> np.ndarray:
    """Adjoint of :func:`gather_contexts`."""
    h, w = shape
    rows, cols = template_reach(context_size)
    gpad = np.zeros((h + rows, w + 2 * cols), dtype=grad_ctx.dtype)
    for n, (dr, dc) in enumerate(context_offsets(context_size)):
        gpad[rows + dr:rows + dr + h, cols + dc:cols + dc + w] += grad_ctx[:, n].reshape(h, w)
    return gpad[rows:, cols:cols + w]


@dataclass(frozen=True)
class LaplaceParams:
    mu: float
    b: float


class ArmNet:
    """C -> C -> C -> 2 MLP with ReLU on the hidden layers."""

    def __init__(self, context_size: int = 24, rng: np.random.Generator | None = None):
        context_offsets(context_size)
        self.context_size = context_size
        c = context_size
        self.layers = [Linear(c, c, rng), ReLU(), Linear(c, c, rng), ReLU(), Linear(c, 2)]
        self._raw_scale = None

    @property
    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batched evaluation: (N, C) contexts -> (mu, b) arrays of length N."""
        h = ctx
        for layer in self.layers:
            h = layer.forward(h)
        mu, s = h[..., 0], h[..., 1]
        with np.errstate(over="ignore"):
            b = np.exp(s)
        self._raw_scale = b
        return mu, np.maximum(b, B_MIN)

    def backward(self, grad_mu: np.ndarray, grad_b: np.ndarray) -> np.ndarray:
        if self._raw_scale is None:
            raise RuntimeError("ArmNet.backward called before forward")
        raw_b, self._raw_scale = self._raw_scale, None
        g = np.stack([grad_mu, grad_b * raw_b * (raw_b > B_MIN)], axis=-1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


def arm_forward(net: ArmNet, context: np.ndarray) -> LaplaceParams:
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (net.context_size,):
        raise ValueError(f"context must have {net.context_size} entries")
    mu, b = net.forward(context[None])
    mu, b = float(mu[0]), float(b[0])
    if not (np.isfinite(mu) and np.isfinite(b)):
        raise FloatingPointError("ARM produced a non-finite distribution")
    return LaplaceParams(mu, b)


def laplace_interval_prob(y, mu, b, with_grad: bool = False):
    """P(y - 1/2 < Y < y + 1/2) for Y ~ Laplace(mu, b).

    With ``with_grad`` also returns dp/dy and dp/db (dp/dmu = -dp/dy).
    """
    y = np.asarray(y)
    d = (y if y.dtype == np.float32 else y.astype(np.float64)) - mu
    a = np.abs(d)
    e_lo = np.exp(-np.abs(a - 0.5) / b)
    e_hi = np.exp(-(a + 0.5) / b)
    p = np.where(a < 0.5, 1.0 - 0.5 * (e_lo + e_hi), 0.5 * (e_lo - e_hi))
    if not with_grad:
        return p
    dp_da = -0.5 * (e_lo - e_hi) / b
    dp_db = 0.5 * (e_lo * (a - 0.5) - e_hi * (a + 0.5)) / b**2
    return p, np.sign(d) * dp_da, dp_db


def laplace_rate_bits(y, p):
    """Bits to code ``y`` under ``p`` (a :class:`LaplaceParams` or (mu, b) pair),
    with the symbol probability floored at 2^-16."""
    mu, b = (p.mu, p.b) if isinstance(p, LaplaceParams) else p
    prob = laplace_interval_prob(y, mu, b)
    bits = -np.log2(np.maximum(prob, PROB_FLOOR))
    return float(bits) if np.ndim(bits) == 0 else bits


def _bits_with_grad(y: np.ndarray, mu: np.ndarray, b: np.ndarray):
    p, dp_dy, dp_db = laplace_interval_prob(y, mu, b, with_grad=True)
    live = p > PROB_FLOOR
    bits = np.where(live, -np.log2(np.where(live, p, 1.0)), MAX_BITS)
    dbits_dp = np.where(live, -1.0 / (np.where(live, p, 1.0) * _LN2), 0.0)
    return bits, dbits_dp * dp_dy, dbits_dp * dp_db


RATE_CHUNK = 8192  # rows per ARM pass; keeps intermediates cache-resident


def rate_forward_backward(
    levels: list[np.ndarray], net: ArmNet, n_pixels: int, with_grad: bool = True,
    weight: float = 1.0,
):
    """Rate in bits per pixel of already-quantized (or noisy) latent levels.

    Returns ``(bpp, grads)`` where ``grads`` holds d(weight * bpp) / d level
    for every level (context path included) or is ``None``. Parameter
    gradients of ``weight * bpp`` are accumulated into the ARM when
    ``with_grad`` is set.
    """
    c = net.context_size
    ctx = np.concatenate([gather_contexts(lv, c) for lv in levels])
    values = np.concatenate([lv.ravel() for lv in levels])
    total = 0.0
    g_ctx = np.empty_like(ctx) if with_grad else None
    g_val = np.empty_like(values) if with_grad else None
    scale = weight / n_pixels
    for lo in range(0, len(values), RATE_CHUNK):
        hi = lo + RATE_CHUNK
        mu, b = net.forward(ctx[lo:hi])
        if not with_grad:
            p = laplace_interval_prob(values[lo:hi], mu, b)
            total += float(np.sum(-np.log2(np.maximum(p, PROB_FLOOR)), dtype=np.float64))
            net._raw_scale = None
            continue
        bits, dbits_dy, dbits_db = _bits_with_grad(values[lo:hi], mu, b)
        total += float(np.sum(bits, dtype=np.float64))
        g_ctx[lo:hi] = net.backward(-dbits_dy * scale, dbits_db * scale)
        g_val[lo:hi] = dbits_dy * scale
    if not with_grad:
        return total / n_pixels, None
    grads = []
    start = 0
    for lv in levels:
        n = lv.size
        g = scatter_context_grad(g_ctx[start:start + n], lv.shape, c)
        g += g_val[start:start + n].reshape(lv.shape)
        grads.append(g)
        start += n
    return total / n_pixels, grads


def pyramid_rate_bpp(
    pyramid: LatentPyramid,
    net: ArmNet,
    mode: QuantMode = QuantMode("none"),
    rng: np.random.Generator | None = None,
) -> float:
    """Estimated latent rate, in bits per image pixel."""
    levels = [mode.apply(lv, rng)[0] for lv in pyramid.levels]
    bpp, _ = rate_forward_backward(levels, net, pyramid.height * pyramid.width, with_grad=False)
    return bpp
