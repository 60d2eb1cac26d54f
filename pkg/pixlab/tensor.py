"""Dense NCHW tensors, the PXT1 interchange format and the seeded generator."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

logger = logging.getLogger(__name__)

PXT_MAGIC = b"PXT1"
_HEADER = struct.Struct("<4s4I")

Dims = tuple[int, int, int, int]
Distribution = Literal["uniform", "normal"]


class PxtFormatError(ValueError):
    pass


class PxtCorruptionError(PxtFormatError):
    pass


@dataclass(frozen=True)
class Tensor:
    """Immutable rank-4 NCHW array, row-major with W innermost.

    float32 is the storage type; float64 tensors exist only in memory for
    gradient checks.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 4:
            raise ValueError(f"Tensor must be rank 4 (N, C, H, W), got shape {self.data.shape}")
        if self.data.dtype not in (np.float32, np.float64):
            raise ValueError(f"Tensor dtype must be float32 or float64, got {self.data.dtype}")
        frozen = np.ascontiguousarray(self.data)
        if frozen is self.data:
            frozen = frozen.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "data", frozen)

    @classmethod
    def from_array(cls, array: np.ndarray, dtype=np.float32) -> "Tensor":
        return cls(np.asarray(array, dtype=dtype))

    @classmethod
    def zeros(cls, dims: Dims, dtype=np.float32) -> "Tensor":
        return cls(np.zeros(dims, dtype=dtype))

    @property
    def dims(self) -> Dims:
        n, c, h, w = self.data.shape
        return n, c, h, w

    @property
    def size(self) -> int:
        return int(self.data.size)

    def offset(self, n: int, c: int, h: int, w: int) -> int:
        _, channels, height, width = self.dims
        return ((n * channels + c) * height + h) * width + w

    def at(self, n: int, c: int, h: int, w: int) -> float:
        return float(self.data.reshape(-1)[self.offset(n, c, h, w)])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))


def _validate_dims(dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or any(d < 0 for d in dims):
        raise ValueError(f"dims must be four non-negative integers, got {dims}")
    return dims  # type: ignore[return-value]


def read_pxt(path: str | Path) -> Tensor:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(PXT_MAGIC)] != PXT_MAGIC:
        raise PxtFormatError(f"{path}: bad magic {raw[:4]!r}, expected {PXT_MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise PxtCorruptionError(f"{path}: header truncated ({len(raw)} bytes)")

    _, n, c, h, w = _HEADER.unpack_from(raw)

    expected = n * c * h * w * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise PxtCorruptionError(
            f"{path}: payload holds {len(payload)} bytes, header dims "
            f"({n}, {c}, {h}, {w}) require {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(n, c, h, w)
    return Tensor(data)


def write_pxt(t: Tensor, path: str | Path) -> None:
    path = Path(path)
    if t.data.dtype != np.float32:
        raise PxtFormatError(f"PXT1 stores float32 only, got {t.data.dtype} for {path}")
    header = _HEADER.pack(PXT_MAGIC, *t.dims)
    payload = t.data.astype("<f4", copy=False).tobytes(order="C")
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise OSError(f"cannot write PXT1 file {path}: {exc}") from exc
    logger.debug("wrote %s dims=%s", path, t.dims)


# --- DETERMINISTIC RANDOMNESS --- #

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same 64-bit seed always yields the same stream."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def random_array(
    dims,
    rng: np.random.Generator,
    dist: Distribution = "uniform",
    dtype=np.float32,
) -> np.ndarray:
    shape = tuple(dims)
    if dist == "uniform":
        values = 2.0 * rng.random(shape) - 1.0
    elif dist == "normal":
        values = rng.standard_normal(shape)
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return values.astype(dtype)


def random_tensor(dims, seed: int, dist: Distribution = "uniform", dtype=np.float32) -> Tensor:
    dims = _validate_dims(dims)
    return Tensor(random_array(dims, make_rng(seed), dist, dtype))


def counting_tensor(dims, dtype=np.float32) -> Tensor:
    dims = _validate_dims(dims)
    return Tensor(np.arange(int(np.prod(dims)), dtype=dtype).reshape(dims))
