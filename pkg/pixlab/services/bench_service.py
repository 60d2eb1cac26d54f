"""Wall-clock timing of the fusion, aggregation and convolution kernels."""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np
import pandas as pd

from pixlab.costmodel import ChannelSampling, Conv, GlobalPool, primitive_flops
from pixlab.nn import conv2d_forward
from pixlab.pix import PixConfig, fuse, gca, partition_channels
from pixlab.tensor import make_rng, random_array
from pixlab.utils.time_tools import time_call

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["op", "size", "zeta", "median_s", "flops", "flops_per_s"]


class BenchOp(str, Enum):
    FUSE = "fuse"
    GCA = "gca"
    CONV = "conv"


def parse_sizes(text: str) -> list[tuple[int, int, int]]:
    """'512x56x56,64x8x8' -> [(512, 56, 56), (64, 8, 8)]."""
    sizes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.lower().split("x")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise ValueError(f"size {item!r} is not of the form CxHxW") from None
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"size {item!r} must be three positive integers CxHxW")
        sizes.append(dims)
    if not sizes:
        raise ValueError("no sizes given")
    return sizes


def op_flops(op: BenchOp, channels: int, height: int, width: int, zeta: int) -> int:
    """Analytic FLOPs of one call; the conv is a 3x3, C -> C, same-padded."""
    if op is BenchOp.FUSE:
        return primitive_flops(ChannelSampling(channels, height, width, zeta))
    if op is BenchOp.GCA:
        return primitive_flops(GlobalPool(channels, height, width))
    return primitive_flops(Conv(channels, channels, 3, height, width))


def _workload(op: BenchOp, dims: tuple[int, int, int], zeta: int, rng: np.random.Generator):
    c, h, w = dims
    x = random_array((1, c, h, w), rng)
    if op is BenchOp.FUSE:
        cfg = PixConfig(zeta=zeta)
        part = partition_channels(c, zeta)
        p = rng.random(len(part)).astype(np.float32)
        return lambda: fuse(x, p, part, cfg)
    if op is BenchOp.GCA:
        return lambda: gca(x)
    weights = random_array((c, c, 3, 3), rng)
    return lambda: conv2d_forward(x, weights, None, 1, 1)


def bench(op: str, sizes: list[tuple[int, int, int]], reps: int, zeta: int = 4, seed: int = 1) -> pd.DataFrame:
    op = BenchOp(op)
    rng = make_rng(seed)
    rows = []
    for dims in sizes:
        c, h, w = dims
        if op is BenchOp.FUSE and zeta > c:
            raise ValueError(f"zeta={zeta} exceeds C={c} for size {c}x{h}x{w}")
        median = float(np.median(time_call(_workload(op, dims, zeta, rng), reps)))
        flops = op_flops(op, c, h, w, zeta)
        rows.append({
            "op": op.value,
            "size": f"{c}x{h}x{w}",
            "zeta": zeta,
            "median_s": median,
            "flops": flops,
            "flops_per_s": flops / median if median > 0 else 0.0,
        })
        logger.info("bench %s %dx%dx%d: median %.6f s over %d reps", op.value, c, h, w, median, reps)
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)
