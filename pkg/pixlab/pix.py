"""Pick-or-Mix dynamic channel sampling: forward and hand-derived backward.

Stages for one sample X of shape (C, H, W):

1. global context aggregation   z[c] = mean_{h,w} |X[c, h, w]|
2. sampling probability         p = act(theta @ z + beta), one entry per subset
3. per-pixel fusion             Y[i] = p[i] * Max(subset i)   if p[i] <= tau
                                Y[i] = p[i] * Avg(subset i)   otherwise

Subsets are contiguous channel ranges of size zeta (the last may be smaller),
so Y has ceil(C / zeta) channels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)


class PixShapeError(ValueError):
    pass


class PixParameterError(ValueError):
    pass


class OpMode(str, Enum):
    PICK_OR_MIX = "pick_or_mix"
    MAX = "max"
    AVG = "avg"
    MIN = "min"


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"  # 0.5 * (1 + tanh(a))


class Reduction(str, Enum):
    MAX = "max"
    AVG = "avg"
    MIN = "min"


@dataclass(frozen=True)
class PixConfig:
    zeta: int = 1
    tau: float = 0.5
    op_mode: OpMode = OpMode.PICK_OR_MIX
    activation: Activation = Activation.SIGMOID

    def __post_init__(self) -> None:
        if isinstance(self.zeta, bool) or int(self.zeta) != self.zeta or self.zeta < 1:
            raise PixParameterError(f"zeta must be an integer >= 1, got {self.zeta!r}")
        if not 0.0 <= float(self.tau) <= 1.0:
            raise PixParameterError(f"tau must lie in [0, 1], got {self.tau!r}")
        object.__setattr__(self, "zeta", int(self.zeta))
        object.__setattr__(self, "op_mode", OpMode(self.op_mode))
        object.__setattr__(self, "activation", Activation(self.activation))

    def subsets(self, channels: int) -> int:
        return math.ceil(channels / self.zeta)


@dataclass
class PixParams:
    theta: np.ndarray  # (S, C)
    beta: np.ndarray  # (S,)

    @property
    def channels(self) -> int:
        return int(self.theta.shape[1])

    @property
    def subsets(self) -> int:
        return int(self.theta.shape[0])

    def check(self, channels: int, zeta: int) -> None:
        expected = (math.ceil(channels / zeta), channels)
        if self.theta.shape != expected:
            raise PixShapeError(f"theta: expected dims {expected}, got {self.theta.shape}")
        if self.beta.shape != (expected[0],):
            raise PixShapeError(f"beta: expected dims {(expected[0],)}, got {self.beta.shape}")


@dataclass(frozen=True)
class Partition:
    channels: int
    zeta: int
    ranges: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.ranges)

    def __iter__(self):
        return iter(self.ranges)

    @property
    def sizes(self) -> list[int]:
        return [hi - lo for lo, hi in self.ranges]


@dataclass
class PixForwardCache:
    x: np.ndarray  # (1, C, H, W)
    z: np.ndarray  # (C,)
    a: np.ndarray  # (S,)
    p: np.ndarray  # (S,)
    partition: Partition
    reductions: tuple[Reduction, ...]
    selected: np.ndarray  # (S, H, W) absolute channel picked by Max/Min, -1 for Avg
    fused: np.ndarray  # (S, H, W) unscaled fused values

    @property
    def output_dims(self) -> tuple[int, int, int, int]:
        _, _, h, w = self.x.shape
        return 1, len(self.partition), h, w


def init_params(channels: int, cfg: PixConfig, rng: np.random.Generator, dtype=np.float32) -> PixParams:
    """Xavier-uniform theta on +-sqrt(6 / (C + S)), zero beta."""
    subsets = cfg.subsets(channels)
    limit = math.sqrt(6.0 / (channels + subsets))
    theta = rng.uniform(-limit, limit, size=(subsets, channels)).astype(dtype)
    return PixParams(theta=theta, beta=np.zeros(subsets, dtype=dtype))


def _single_sample(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise PixShapeError(f"{what}: expected dims (1, C, H, W), got {x.shape}")
    return x


def gca(x: np.ndarray) -> np.ndarray:
    x = _single_sample(x, "gca input")
    _, channels, height, width = x.shape
    if height * width == 0:
        raise PixShapeError(f"gca needs a non-empty spatial extent, got H={height} W={width}")
    return np.abs(x[0]).reshape(channels, -1).sum(axis=1) / x.dtype.type(height * width)


def activate(a: np.ndarray, activation: Activation) -> np.ndarray:
    """Probabilities clipped to the open interval (0, 1) at the working precision."""
    a = np.asarray(a)
    p = expit(a) if activation is Activation.SIGMOID else 0.5 * (1.0 + np.tanh(a))
    one, zero = p.dtype.type(1), p.dtype.type(0)
    return np.clip(p, np.nextafter(zero, one), np.nextafter(one, zero))


def activation_grad(a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SIGMOID:
        p = expit(a)
        return p * (1.0 - p)
    t = np.tanh(a)
    return 0.5 * (1.0 - t * t)


def _preactivation(z: np.ndarray, params: PixParams, cfg: PixConfig) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 1:
        raise PixShapeError(f"z: expected a vector, got dims {z.shape}")
    params.check(z.shape[0], cfg.zeta)
    return params.theta @ z + params.beta


def predict_probabilities(z: np.ndarray, params: PixParams, cfg: PixConfig) -> np.ndarray:
    return activate(_preactivation(z, params, cfg), cfg.activation)


def partition_channels(channels: int, zeta: int) -> Partition:
    if zeta < 1 or zeta > channels:
        raise PixParameterError(f"zeta must satisfy 1 <= zeta <= C={channels}, got {zeta}")
    ranges = tuple(
        (start, min(start + zeta, channels)) for start in range(0, channels, zeta)
    )
    return Partition(channels=channels, zeta=zeta, ranges=ranges)


def _reduction_for(p_i: np.floating, cfg: PixConfig) -> Reduction:
    if cfg.op_mode is OpMode.PICK_OR_MIX:
        # tau is compared at the precision of p
        return Reduction.MAX if p_i <= type(p_i)(cfg.tau) else Reduction.AVG
    return Reduction(cfg.op_mode.value)


def fuse(x: np.ndarray, p: np.ndarray, part: Partition, cfg: PixConfig):
    """Apply Pick-or-Mix per pixel; returns (y, (reductions, selected, fused))."""
    x = _single_sample(x, "fuse input")
    _, channels, height, width = x.shape
    if channels != part.channels:
        raise PixShapeError(f"fuse: partition covers {part.channels} channels, input has {channels}")
    p = np.asarray(p, dtype=x.dtype)
    if p.shape != (len(part),):
        raise PixShapeError(f"fuse: expected {len(part)} probabilities, got dims {p.shape}")

    y = np.empty((1, len(part), height, width), dtype=x.dtype)
    fused = np.empty((len(part), height, width), dtype=x.dtype)
    selected = np.full((len(part), height, width), -1, dtype=np.int64)
    reductions: list[Reduction] = []

    for i, (lo, hi) in enumerate(part):
        block = x[0, lo:hi]
        reduction = _reduction_for(p[i], cfg)
        if reduction is Reduction.AVG:
            acc = block[0].copy()
            for c in range(1, hi - lo):
                acc = acc + block[c]
            fused[i] = acc / x.dtype.type(hi - lo)
        else:
            # argmax/argmin return the first hit, so ties route to the lowest channel
            idx = block.argmax(axis=0) if reduction is Reduction.MAX else block.argmin(axis=0)
            fused[i] = np.take_along_axis(block, idx[None], axis=0)[0]
            selected[i] = lo + idx
        y[0, i] = p[i] * fused[i]
        reductions.append(reduction)

    return y, (tuple(reductions), selected, fused)


def fuse_oracle(x: np.ndarray, p: np.ndarray, part: Partition, cfg: PixConfig) -> np.ndarray:
    """Pixel-by-pixel evaluation of the fusion rule, used as a reference."""
    x = _single_sample(x, "fuse input")
    _, _, height, width = x.shape
    dtype = x.dtype.type
    y = np.zeros((1, len(part), height, width), dtype=x.dtype)
    for i, (lo, hi) in enumerate(part):
        p_i = dtype(p[i])
        if cfg.op_mode is OpMode.PICK_OR_MIX:
            reduction = Reduction.MAX if p_i <= dtype(cfg.tau) else Reduction.AVG
        else:
            reduction = Reduction(cfg.op_mode.value)
        for h in range(height):
            for w in range(width):
                values = [x[0, c, h, w] for c in range(lo, hi)]
                if reduction is Reduction.MAX:
                    y[0, i, h, w] = p_i * max(values)
                elif reduction is Reduction.MIN:
                    y[0, i, h, w] = p_i * min(values)
                else:
                    total = values[0]
                    for v in values[1:]:
                        total = total + v
                    y[0, i, h, w] = p_i * (total / dtype(len(values)))
    return y


def pix_forward(x: np.ndarray, params: PixParams, cfg: PixConfig):
    x = _single_sample(x, "pix_forward input")
    channels = x.shape[1]
    if cfg.zeta > channels:
        raise PixParameterError(f"zeta={cfg.zeta} exceeds the {channels} input channels")
    z = gca(x)
    a = _preactivation(z, params, cfg)
    p = activate(a, cfg.activation)
    part = partition_channels(channels, cfg.zeta)
    y, (reductions, selected, fused) = fuse(x, p, part, cfg)
    cache = PixForwardCache(
        x=x, z=z, a=a, p=p, partition=part,
        reductions=reductions, selected=selected, fused=fused,
    )
    return y, cache


def pix_backward(dy: np.ndarray, cache: PixForwardCache, params: PixParams, cfg: PixConfig):
    """Gradients w.r.t. x, theta and beta.

    The branch choice and the Max/Min selection are treated as locally constant.
    """
    dy = np.asarray(dy)
    if dy.shape != cache.output_dims:
        raise PixShapeError(f"pix_backward: expected dy dims {cache.output_dims}, got {dy.shape}")
    x = cache.x
    _, _, height, width = x.shape
    dy0 = dy[0].astype(x.dtype, copy=False)

    dp = (dy0 * cache.fused).reshape(len(cache.partition), -1).sum(axis=1)
    da = dp * activation_grad(cache.a, cfg.activation)
    dbeta = da.astype(params.beta.dtype, copy=False)
    dtheta = np.outer(da, cache.z).astype(params.theta.dtype, copy=False)
    dz = params.theta.T @ da

    dx = np.zeros_like(x)
    rows, cols = np.indices((height, width))
    for i, (lo, hi) in enumerate(cache.partition):
        g = cache.p[i] * dy0[i]
        if cache.reductions[i] is Reduction.AVG:
            dx[0, lo:hi] += g / (hi - lo)
        else:
            dx[0, cache.selected[i], rows, cols] += g

    dx[0] += (dz[:, None, None] * np.sign(x[0])) / (height * width)
    return dx, dtheta, dbeta


def branch_fraction(caches: list[PixForwardCache]) -> float:
    """Share of subsets that took the Max branch across the given forwards."""
    total = sum(len(c.reductions) for c in caches)
    if total == 0:
        return 0.0
    picked = sum(r is Reduction.MAX for c in caches for r in c.reductions)
    return picked / total


def pix_forward_batch(x: np.ndarray, params: PixParams, cfg: PixConfig):
    """Per-sample forward over the batch; each sample gets its own z and p."""
    outputs, caches = [], []
    for n in range(x.shape[0]):
        y, cache = pix_forward(x[n:n + 1], params, cfg)
        outputs.append(y)
        caches.append(cache)
    return np.concatenate(outputs, axis=0), caches


def pix_backward_batch(dy: np.ndarray, caches: list[PixForwardCache], params: PixParams, cfg: PixConfig):
    dxs = []
    dtheta = np.zeros_like(params.theta)
    dbeta = np.zeros_like(params.beta)
    for n, cache in enumerate(caches):
        dx, dt, db = pix_backward(dy[n:n + 1], cache, params, cfg)
        dxs.append(dx)
        dtheta += dt
        dbeta += db
    return np.concatenate(dxs, axis=0), dtheta, dbeta
