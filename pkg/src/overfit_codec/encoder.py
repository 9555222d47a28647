"""Per-image overfitting of latents and networks, then bitstream emission.

Training minimizes ``MSE + lambda * latent bpp`` with Adam. A first phase
replaces rounding by additive uniform noise under a cosine-decayed learning
rate; a second phase rounds for real and passes gradients back through the
rounding scaled by epsilon. The network rate is left out of the loss.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arm import rate_forward_backward
from .coding.bitstream import BitstreamHeader, NetworkEntry, serialize
from .coding.latents import encode_latents
from .coding.weights import QuantizedWeights, code_network, quantize_network
from .config import get_config
from .decoder import decode_bitstream
from .latent import LatentPyramid, QuantMode, init_pyramid
from .metrics import psnr
from .model import NETWORK_NAMES, CodecModel
from .nn import Adam, Param

MAX_RESTARTS = 3


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lam: float = 1e-3
    config: str = "main"
    phase1_iters: int = 10000
    phase2_iters: int = 2000
    lr_start: float = 1e-2
    lr_end: float = 1e-4
    phase2_lr: float = 1e-4
    epsilon: float = 1e-2
    seed: int = 0
    n_levels: int = 7
    eval_every: int = 100  # hard-rounded snapshot check cadence in phase 1
    dtype: str = "float32"  # training arithmetic; coding is always float64

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.phase1_iters < 0 or self.phase2_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if not (self.lr_start > 0 and self.lr_end > 0 and self.phase2_lr > 0):
            raise ValueError("learning rates must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        get_config(self.config)


def rd_loss(x: np.ndarray, x_hat: np.ndarray, rate_bpp: float, lam: float) -> float:
    """Rate-distortion cost: MSE on the [0, 1] scale plus lambda times bpp."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2)) + lam * rate_bpp


def cosine_lr(t: int, total: int, start: float, end: float) -> float:
    if total <= 1:
        return start
    return end + 0.5 * (start - end) * (1.0 + math.cos(math.pi * t / (total - 1)))


@dataclass
class Evaluation:
    loss: float
    mse: float
    rate_bpp: float


@dataclass
class _Snapshot:
    loss: float
    values: list[np.ndarray]
    adam: tuple


class Trainer:
    """Holds the model, the continuous latents and one Adam state.

    The optimizer state is carried across the phase switch.
    """

    def __init__(self, image: np.ndarray, cfg: TrainConfig):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError(f"expected a (3, H, W) image, got {image.shape}")
        self.image = image
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        self._target = image.astype(dtype)
        self.rng = np.random.default_rng(cfg.seed)
        self.model = CodecModel(cfg.config, cfg.n_levels, self.rng)
        self.model.upsampler.init_bicubic()
        self.model.astype(dtype)
        _, h, w = image.shape
        self.n_pixels = h * w
        self.latents = [Param(lv.astype(dtype)) for lv in init_pyramid(h, w, cfg.n_levels).levels]
        self.params = self.latents + self.model.params
        self.adam = Adam(self.params)
        self.lr_scale = 1.0
        self.restarts = 0
        self.history: list[float] = []
        self.phase_losses: dict[str, float] = {}
        self.best: _Snapshot | None = None
        self._take_snapshot(self.evaluate().loss)

    # -- bookkeeping -------------------------------------------------------

    def _take_snapshot(self, loss: float) -> None:
        self.best = _Snapshot(loss, [p.value.copy() for p in self.params], self.adam.state())

    def _consider(self, loss: float) -> None:
        if math.isfinite(loss) and loss < self.best.loss:
            self._take_snapshot(loss)

    def restore_best(self) -> None:
        for p, v in zip(self.params, self.best.values):
            p.value[...] = v
        self.adam.load_state(self.best.adam)

    def _diverged(self) -> None:
        self.restarts += 1
        if self.restarts > MAX_RESTARTS:
            raise TrainingDiverged(f"loss stayed non-finite after {MAX_RESTARTS} restarts")
        self.restore_best()
        self.lr_scale *= 0.5

    def pyramid(self) -> LatentPyramid:
        """Hard-rounded current latents."""
        return LatentPyramid([p.value.astype(np.float64) for p in self.latents]).rounded()

    # -- loss ----------------------------------------------------------------

    def _forward(self, levels: list[np.ndarray], with_grad: bool):
        x_hat = self.model.synthesize(levels)
        diff = x_hat - self._target
        mse = float(np.mean(np.square(diff), dtype=np.float64))
        rate, g_rate = rate_forward_backward(
            levels, self.model.arm, self.n_pixels, with_grad=with_grad, weight=self.cfg.lam
        )
        if not with_grad:
            return mse, rate, None
        g_z = self.model.synthesis.backward(diff * (2.0 / diff.size))
        g_levels = self.model.upsampler.backward(g_z)
        return mse, rate, [gd + gr for gd, gr in zip(g_levels, g_rate)]

    def evaluate(self) -> Evaluation:
        """RD loss with hard-rounded latents, i.e. what the decoder would see."""
        dtype = self._target.dtype
        levels = [lv.astype(dtype) for lv in self.pyramid().levels]
        mse, rate, _ = self._forward(levels, with_grad=False)
        return Evaluation(mse + self.cfg.lam * rate, mse, rate)

    def step(self, mode: QuantMode, lr: float, track: bool = False) -> float:
        """One Adam step; returns the loss before the update.

        With ``track`` the pre-update state is offered to the snapshot, which
        is only meaningful when ``mode`` rounds for real.
        """
        self.adam.zero_grad()
        quant = [mode.apply(p.value, self.rng) for p in self.latents]
        mse, rate, grads = self._forward([q for q, _ in quant], with_grad=True)
        loss = mse + self.cfg.lam * rate
        for p, (_, scale), g in zip(self.latents, quant, grads):
            p.grad += scale * g
        if track:
            self._consider(loss)
        if not math.isfinite(loss) or not self.adam.step(lr * self.lr_scale):
            self._diverged()
            return math.nan
        return loss

    # -- phases --------------------------------------------------------------

    def run_phase1(self) -> float:
        n = self.cfg.phase1_iters
        mode = QuantMode("noise")
        for t in range(n):
            loss = self.step(mode, cosine_lr(t, n, self.cfg.lr_start, self.cfg.lr_end))
            self.history.append(loss)
            if (t + 1) % self.cfg.eval_every == 0:
                self._consider(self.evaluate().loss)
        final = self.evaluate().loss
        self._consider(final)
        self.phase_losses["phase1"] = final
        return final

    def run_phase2(self, epsilon: float | None = None) -> float:
        """Rounding phase; returns the lowest hard-rounded loss reached in it.

        The hard-rounded loss at the end of the phase is kept as
        ``phase_losses["phase2_final"]``.
        """
        eps = self.cfg.epsilon if epsilon is None else epsilon
        mode = QuantMode("ste_eps", eps)
        best = math.inf
        for _ in range(self.cfg.phase2_iters):
            # forward is already hard-rounded, so the pre-step loss is exact
            loss = self.step(mode, self.cfg.phase2_lr, track=True)
            self.history.append(loss)
            if math.isfinite(loss):
                best = min(best, loss)
        final = self.evaluate().loss
        self._consider(final)
        best = min(best, final)
        self.phase_losses["phase2"] = best
        self.phase_losses["phase2_final"] = final
        return best

    def train(self) -> CodecModel:
        self.run_phase1()
        self.run_phase2()
        self.restore_best()
        return self.model


def train(image: np.ndarray, cfg: TrainConfig) -> Trainer:
    """Overfit a fresh model to ``image``; the best hard-rounded state is loaded."""
    trainer = Trainer(image, cfg)
    trainer.train()
    return trainer


@dataclass
class EncodeResult:
    bitstream: bytes
    reconstructed: np.ndarray
    psnr: float
    bpp: float
    bpp_split: dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0
    phase_losses: dict[str, float] = field(default_factory=dict)

    @property
    def bpp_latent(self) -> float:
        return self.bpp_split["latents"]

    @property
    def bpp_nn(self) -> float:
        return sum(self.bpp_split[name] for name in NETWORK_NAMES)

    def report(self) -> dict:
        return {
            "bytes": len(self.bitstream),
            "bpp_total": self.bpp,
            "bpp_latent": self.bpp_latent,
            "bpp_nn": self.bpp_nn,
            "bpp_split": dict(self.bpp_split),
            "psnr": self.psnr,
            "encode_seconds": self.seconds,
        }


def quantize_model(trainer: Trainer) -> dict[str, QuantizedWeights]:
    """Greedy per-network step choice, leaving the dequantized weights in place.

    Each candidate is scored by the hard-rounded RD loss plus the weight
    rate, with the networks already handled kept at their chosen values.
    """
    model = trainer.model
    chosen = {}
    for name in NETWORK_NAMES:
        original = model.get_flat(name)

        def evaluate(values, name=name):
            model.set_flat(name, values)
            return trainer.evaluate().loss

        qw = quantize_network(original, evaluate, trainer.cfg.lam, trainer.n_pixels)
        model.set_flat(name, qw.dequantize())
        chosen[name] = qw
    return chosen


def emit_bitstream(model: CodecModel, pyramid: LatentPyramid,
                   weights: dict[str, QuantizedWeights]) -> tuple[bytes, dict[str, int]]:
    """Serialize quantized networks and integer latents; also returns stream sizes."""
    net_streams = [code_network(weights[name]) for name in NETWORK_NAMES]
    level_streams, zero = encode_latents(pyramid, model.arm)
    header = BitstreamHeader(
        height=pyramid.height,
        width=pyramid.width,
        config_id=model.config.config_id,
        n_levels=pyramid.n_levels,
        networks=[NetworkEntry(weights[n].q, weights[n].scale_fp, len(s))
                  for n, s in zip(NETWORK_NAMES, net_streams)],
        level_zero=zero,
        level_lengths=[len(s) for s in level_streams],
    )
    data = serialize(header, net_streams + level_streams)
    sizes = {name: len(s) for name, s in zip(NETWORK_NAMES, net_streams)}
    sizes["latents"] = sum(len(s) for s in level_streams)
    return data, sizes


def encode_trained(trainer: Trainer, start: float | None = None) -> EncodeResult:
    """Quantize a trained state and produce the bitstream and its decoding."""
    start = time.perf_counter() if start is None else start
    trainer.restore_best()
    weights = quantize_model(trainer)
    pyramid = trainer.pyramid()
    data, sizes = emit_bitstream(trainer.model, pyramid, weights)
    decoded = decode_bitstream(data)
    n_pixels = trainer.n_pixels
    split = {k: v * 8.0 / n_pixels for k, v in sizes.items()}
    return EncodeResult(
        bitstream=data,
        reconstructed=decoded.image,
        psnr=psnr(trainer.image, decoded.image),
        bpp=len(data) * 8.0 / n_pixels,
        bpp_split=split,
        seconds=time.perf_counter() - start,
        phase_losses=dict(trainer.phase_losses),
    )


def encode_image(image: np.ndarray, cfg: TrainConfig) -> EncodeResult:
    start = time.perf_counter()
    trainer = train(image, cfg)
    return encode_trained(trainer, start)


def branch(trainer: Trainer) -> Trainer:
    """Independent copy of a trainer, e.g. to try two phase-2 settings."""
    return copy.deepcopy(trainer)
