"""Learned x2 upsampling of the latent pyramid into a dense representation.

The single 8x8 transposed-convolution kernel starts from chained bicubic
interpolation. The half-pel cubic taps are obtained by solving the 4x4
interpolation system for a cubic through s(-1), s(0), s(1), s(2) and
evaluating it at 1/2.
"""

from __future__ import annotations

import numpy as np

from .latent import LatentPyramid
from .nn import TransposedConv8s2, tconv2d_k8s2_backward, tconv2d_k8s2_forward

# Rows: the cubic a0 + a1 x + a2 x^2 + a3 x^3 evaluated at x = -1, 0, 1, 2.
CUBIC_SYSTEM = np.array(
    [
        [1, -1, 1, -1],
        [1, 0, 0, 0],
        [1, 1, 1, 1],
        [1, 2, 4, 8],
    ],
    dtype=np.float64,
)
HALF_PEL_MONOMIALS = np.array([1.0, 0.5, 0.25, 0.125])


def gauss_jordan_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a square matrix by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[pivot, col] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def bicubic_halfpel_kernel() -> np.ndarray:
    """Taps applied to [s(-1), s(0), s(1), s(2)] to interpolate s(1/2)."""
    return gauss_jordan_inverse(CUBIC_SYSTEM).T @ HALF_PEL_MONOMIALS


def bicubic_profile() -> np.ndarray:
    """8-tap stride-2 profile: integer phase passes the sample through, the
    half-pel phase applies the cubic taps (reversed, as the transposed
    convolution scatters rather than gathers)."""
    h = bicubic_halfpel_kernel()
    return np.array([h[3], 0.0, h[2], 1.0, h[1], 0.0, h[0], 0.0])


def bicubic_kernel_2d() -> np.ndarray:
    p = bicubic_profile()
    return np.outer(p, p)


class Upsampler:
    """One learned kernel shared by every level and every x2 stage."""

    def __init__(self, kernel: np.ndarray | None = None):
        self.tconv = TransposedConv8s2(bicubic_kernel_2d() if kernel is None else kernel)
        self._cache = None

    @property
    def kernel(self) -> np.ndarray:
        return self.tconv.weight.value

    @property
    def params(self):
        return self.tconv.params

    def init_bicubic(self) -> "Upsampler":
        self.tconv.weight.value[...] = bicubic_kernel_2d()
        return self

    def forward(self, levels: list[np.ndarray]) -> np.ndarray:
        """Stack every level, upsampled to the level-0 shape, into (L, H, W).

        Levels sharing a resolution are upsampled together; after each x2
        stage the result is cropped to the shape of the next finer level.
        """
        k = self.kernel
        cur = levels[-1][None]
        stages = []
        for lvl in range(len(levels) - 1, 0, -1):
            h, w = levels[lvl - 1].shape
            stages.append(cur)
            up = tconv2d_k8s2_forward(k, cur)[:, :h, :w]
            cur = np.concatenate([levels[lvl - 1][None], up])
        self._cache = stages
        return cur

    def backward(self, grad_z: np.ndarray) -> list[np.ndarray]:
        """Gradient w.r.t. each level; accumulates the kernel gradient."""
        if self._cache is None:
            raise RuntimeError("Upsampler.backward called before forward")
        stages, self._cache = self._cache, None
        k = self.kernel
        grads = []
        g = grad_z
        for inp in reversed(stages):
            grads.append(g[0])
            _, h, w = inp.shape
            gfull = np.zeros((inp.shape[0], 2 * h, 2 * w), dtype=g.dtype)
            gfull[:, :g.shape[1], :g.shape[2]] = g[1:]
            g, gk = tconv2d_k8s2_backward(k, inp, gfull)
            self.tconv.weight.grad += gk
        grads.append(g[0])
        return grads


def upsample_pyramid(pyramid: LatentPyramid, upsampler: Upsampler) -> np.ndarray:
    return upsampler.forward(pyramid.levels)
