"""Small set of layers with exact forward passes and hand-written adjoints.

Only the layer kinds needed by the codec networks are supported: dense
layers, 1x1 and 3x3 convolutions (zero padded, "same" output size), a
stride-2 transposed convolution with an 8x8 kernel and ReLU. Every layer
object caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into :class:`Param.grad`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("linear", "conv_k1", "conv_k3", "tconv_k8_s2")


class Param:
    """A trainable tensor with its gradient and Adam moment buffers."""

    __slots__ = ("value", "grad", "m", "v")

    def __init__(self, value):
        value = np.asarray(value)
        dtype = value.dtype if value.dtype == np.float32 else np.float64
        self.value = np.array(value, dtype=dtype)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def astype(self, dtype) -> None:
        """Convert value, gradient and moments in place to ``dtype``."""
        for name in self.__slots__:
            setattr(self, name, getattr(self, name).astype(dtype))

    def __repr__(self) -> str:
        return f"Param(shape={self.value.shape})"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int
    out_features: int
    activation: str = "none"
    residual: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "tconv_k8_s2" and (self.in_features, self.out_features) != (1, 1):
            raise ValueError("tconv_k8_s2 operates on a single channel")
        if self.residual and self.in_features != self.out_features:
            raise ValueError("residual layers must preserve the channel count")

    @property
    def macs_per_output_sample(self) -> int:
        """Multiplications needed to produce one spatial output position."""
        if self.kind in ("linear", "conv_k1"):
            return self.in_features * self.out_features
        if self.kind == "conv_k3":
            return self.in_features * self.out_features * 9
        # 8x8 kernel at stride 2: every output sees a 4x4 input neighbourhood
        return 16


# ---------------------------------------------------------------------------
# Functional forms
# ---------------------------------------------------------------------------


def linear_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = W x + b on the last axis of ``x``."""
    if weight.ndim != 2 or bias.shape != (weight.shape[0],):
        raise ValueError(f"bad linear parameters {weight.shape}, {bias.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} features, expected {weight.shape[1]}")
    return x @ weight.T + bias


def linear_backward(weight: np.ndarray, x: np.ndarray, grad_y: np.ndarray):
    """Return (grad_x, grad_weight, grad_bias) for :func:`linear_forward`."""
    out_f, in_f = weight.shape
    g2 = grad_y.reshape(-1, out_f)
    grad_w = g2.T @ x.reshape(-1, in_f)
    grad_b = g2.sum(axis=0)
    grad_x = grad_y @ weight
    return grad_x, grad_w, grad_b


def _shifted3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C * 9, H * W): the 3x3 zero-padded neighbourhoods, channel-major."""
    c, h, w = x.shape
    xpad = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 3, 3, h, w), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, i, j] = xpad[:, i:i + h, j:j + w]
    return cols.reshape(c * 9, h * w)


def conv2d_forward(kernel: np.ndarray, bias: np.ndarray, x: np.ndarray, k: int) -> np.ndarray:
    """Cross-correlation of a (C, H, W) grid with an (O, C, k, k) kernel.

    ``k=3`` uses one sample of zero padding so the output keeps the input
    spatial size. ``k=1`` is a per-pixel linear layer.
    """
    if k not in (1, 3):
        raise ValueError(f"unsupported kernel size {k}")
    if x.ndim != 3:
        raise ValueError("conv2d expects a (channels, height, width) grid")
    out_c, in_c, kh, kw = kernel.shape
    if (kh, kw) != (k, k) or x.shape[0] != in_c:
        raise ValueError(f"kernel {kernel.shape} does not match input {x.shape} / k={k}")
    if bias.shape != (out_c,):
        raise ValueError(f"bias shape {bias.shape} does not match {out_c} outputs")
    c, h, w = x.shape
    cols = x.reshape(c, h * w) if k == 1 else _shifted3(x)
    y = kernel.reshape(out_c, -1) @ cols
    y += bias[:, None]
    return y.reshape(out_c, h, w)


def conv2d_backward(kernel: np.ndarray, x: np.ndarray, grad_y: np.ndarray, k: int):
    """Return (grad_x, grad_kernel, grad_bias) for :func:`conv2d_forward`."""
    out_c = kernel.shape[0]
    c, h, w = x.shape
    g = grad_y.reshape(out_c, h * w)
    kmat = kernel.reshape(out_c, -1)
    cols = x.reshape(c, h * w) if k == 1 else _shifted3(x)
    gw = (g @ cols.T).reshape(kernel.shape)
    gb = g.sum(axis=1)
    gcols = kmat.T @ g
    if k == 1:
        return gcols.reshape(c, h, w), gw, gb
    gcols = gcols.reshape(c, 3, 3, h, w)
    gpad = np.zeros((c, h + 2, w + 2), dtype=gcols.dtype)
    for i in range(3):
        for j in range(3):
            gpad[:, i:i + h, j:j + w] += gcols[:, i, j]
    return gpad[:, 1:-1, 1:-1], gw, gb


# Output sample m of the stride-2 transposed convolution receives
# x[i] * kernel[m + TCONV_CROP - 2 i]; the 2H x 2W output is the full
# scatter result cropped from offset TCONV_CROP. Written polyphase, output
# phase r at position 2a + r reads the 5-sample input window starting at a
# (after padding by 2), window tap i pairing with kernel tap 7 - 2i (r = 0)
# or 8 - 2i (r = 1).
TCONV_CROP = 3


def _tconv_tap_table():
    rows = []
    for i in range(5):
        for r in (0, 1):
            p = 7 - 2 * i if r == 0 else 8 - 2 * i
            if 0 <= p <= 7:
                rows.append((i, r, p))
    taps = []
    for i, r, p in rows:
        for j, q, s in rows:
            taps.append((i, j, r, q, p, s))
    return np.array(taps)


_TAPS = _tconv_tap_table()  # 64 rows: window (i, j), phase (r, q), kernel (p, s)


def _tconv_phase_matrix(kernel: np.ndarray) -> np.ndarray:
    m = np.zeros((5, 5, 2, 2), dtype=kernel.dtype)
    m[_TAPS[:, 0], _TAPS[:, 1], _TAPS[:, 2], _TAPS[:, 3]] = kernel[_TAPS[:, 4], _TAPS[:, 5]]
    return m.reshape(25, 4)


def _tconv_patches(x: np.ndarray) -> np.ndarray:
    b, h, w = x.shape
    xpad = np.pad(x, ((0, 0), (2, 2), (2, 2)))
    return sliding_window_view(xpad, (5, 5), axis=(1, 2)).reshape(b * h * w, 25)


def tconv2d_k8s2_forward(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Stride-2 transposed convolution of single-channel grids.

    ``x`` is (H, W) or a batch (B, H, W) of independent grids; the output is
    (2H, 2W) (resp. (B, 2H, 2W)).
    """
    if kernel.shape != (8, 8):
        raise ValueError(f"kernel must be 8x8, got {kernel.shape}")
    single = x.ndim == 2
    xb = x[None] if single else x
    b, h, w = xb.shape
    y = _tconv_patches(xb) @ _tconv_phase_matrix(kernel)
    y = y.reshape(b, h, w, 2, 2).transpose(0, 1, 3, 2, 4).reshape(b, 2 * h, 2 * w)
    return y[0] if single else y


def tconv2d_k8s2_backward(kernel: np.ndarray, x: np.ndarray, grad_y: np.ndarray):
    """Return (grad_x, grad_kernel) for :func:`tconv2d_k8s2_forward`."""
    single = x.ndim == 2
    xb = x[None] if single else x
    gy = grad_y[None] if single else grad_y
    b, h, w = xb.shape
    g = gy.reshape(b, h, 2, w, 2).transpose(0, 1, 3, 2, 4).reshape(b * h * w, 4)
    gm = (_tconv_patches(xb).T @ g).reshape(5, 5, 2, 2)
    grad_k = np.zeros((8, 8), dtype=gm.dtype)
    grad_k[_TAPS[:, 4], _TAPS[:, 5]] = gm[_TAPS[:, 0], _TAPS[:, 1], _TAPS[:, 2], _TAPS[:, 3]]
    gp = (g @ _tconv_phase_matrix(kernel).T).reshape(b, h, w, 5, 5)
    gpad = np.zeros((b, h + 4, w + 4), dtype=gp.dtype)
    for i in range(5):
        for j in range(5):
            gpad[:, i:i + h, j:j + w] += gp[..., i, j]
    gx = gpad[:, 2:-2, 2:-2]
    return (gx[0] if single else gx), grad_k


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return grad_y * (x > 0)


# ---------------------------------------------------------------------------
# Layer objects
# ---------------------------------------------------------------------------


class Layer:
    """Base class: a forward pass records its input, backward consumes it."""

    def __init__(self):
        self._x = None

    @property
    def params(self) -> list[Param]:
        return []

    def _cached_input(self):
        if self._x is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        x, self._x = self._x, None
        return x


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        super().__init__()
        bound = np.sqrt(1.0 / in_features)
        if rng is None:
            w = np.zeros((out_features, in_features))
            b = np.zeros(out_features)
        else:
            w = rng.uniform(-bound, bound, (out_features, in_features))
            b = rng.uniform(-bound, bound, out_features)
        self.weight = Param(w)
        self.bias = Param(b)

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        self._x = x
        return linear_forward(self.weight.value, self.bias.value, x)

    def backward(self, grad_y):
        x = self._cached_input()
        gx, gw, gb = linear_backward(self.weight.value, x, grad_y)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class Conv2d(Layer):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        k: int,
        rng: np.random.Generator | None = None,
        zero: bool = False,
    ):
        super().__init__()
        if k not in (1, 3):
            raise ValueError(f"unsupported kernel size {k}")
        self.k = k
        shape = (out_channels, in_channels, k, k)
        bound = np.sqrt(1.0 / (in_channels * k * k))
        if zero or rng is None:
            w, b = np.zeros(shape), np.zeros(out_channels)
        else:
            w = rng.uniform(-bound, bound, shape)
            b = rng.uniform(-bound, bound, out_channels)
        self.weight = Param(w)
        self.bias = Param(b)

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        self._x = x
        return conv2d_forward(self.weight.value, self.bias.value, x, self.k)

    def backward(self, grad_y):
        x = self._cached_input()
        gx, gw, gb = conv2d_backward(self.weight.value, x, grad_y, self.k)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class TransposedConv8s2(Layer):
    """Bias-free 8x8, stride-2 transposed convolution on single channels."""

    def __init__(self, kernel: np.ndarray | None = None):
        super().__init__()
        self.weight = Param(np.zeros((8, 8)) if kernel is None else kernel)

    @property
    def params(self):
        return [self.weight]

    def forward(self, x):
        self._x = x
        return tconv2d_k8s2_forward(self.weight.value, x)

    def backward(self, grad_y):
        x = self._cached_input()
        gx, gk = tconv2d_k8s2_backward(self.weight.value, x, grad_y)
        self.weight.grad += gk
        return gx


class ReLU(Layer):
    def forward(self, x):
        self._x = x
        return relu(x)

    def backward(self, grad_y):
        return relu_backward(self._cached_input(), grad_y)


def build_layer(spec: LayerSpec, rng: np.random.Generator | None = None) -> Layer:
    if spec.kind == "linear":
        return Linear(spec.in_features, spec.out_features, rng)
    if spec.kind == "conv_k1":
        return Conv2d(spec.in_features, spec.out_features, 1, rng)
    if spec.kind == "conv_k3":
        return Conv2d(spec.in_features, spec.out_features, 3, rng, zero=spec.residual)
    return TransposedConv8s2()


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam with bias correction. ``step`` returns False (and leaves every
    parameter untouched) when a gradient holds a non-finite value."""

    def __init__(
        self,
        params: Iterable[Param],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: list[Param] = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> bool:
        if not all(np.all(np.isfinite(p.grad)) for p in self.params):
            return False
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p in self.params:
            p.m *= self.beta1
            p.m += (1.0 - self.beta1) * p.grad
            p.v *= self.beta2
            p.v += (1.0 - self.beta2) * p.grad**2
            p.value -= lr * (p.m / c1) / (np.sqrt(p.v / c2) + self.eps)
        return True

    def state(self) -> tuple:
        return self.t, [(p.m.copy(), p.v.copy()) for p in self.params]

    def load_state(self, state: tuple) -> None:
        self.t, moments = state
        for p, (m, v) in zip(self.params, moments):
            p.m[...] = m
            p.v[...] = v


def zero_grads(params: Sequence[Param]) -> None:
    for p in params:
        p.zero_grad()
