"""Analytic FLOP and memory accounting.

One fused multiply-add counts as one FLOP. Memory is counted in FP32
elements (4 bytes each) and reported in decimal megabytes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import pandas as pd

from pixlab import netspec
from pixlab.netspec import NetworkSpec, NetworkSpecError, TracedLayer

logger = logging.getLogger(__name__)

BYTES_PER_ELEMENT = 4
SE_REDUCTION = 16


def _check_positive(kind: str, **dims: int) -> None:
    bad = {k: v for k, v in dims.items() if int(v) != v or v <= 0}
    if bad:
        raise ValueError(f"{kind}: dims must be positive integers, got {bad}")


# --- PRIMITIVES --- #

@dataclass(frozen=True)
class Conv:
    kernels: int
    channels: int
    k: int
    height: int
    width: int

    def __post_init__(self):
        _check_positive("Conv", kernels=self.kernels, channels=self.channels, k=self.k,
                        height=self.height, width=self.width)


@dataclass(frozen=True)
class _Elementwise:
    channels: int
    height: int
    width: int

    def __post_init__(self):
        _check_positive(type(self).__name__, channels=self.channels, height=self.height, width=self.width)

    @property
    def elements(self) -> int:
        return self.channels * self.height * self.width


class BatchNorm(_Elementwise):
    pass


class ReLU(_Elementwise):
    pass


class Sigmoid(_Elementwise):
    pass


class GlobalPool(_Elementwise):
    pass


@dataclass(frozen=True)
class ChannelSampling(_Elementwise):
    zeta: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not 1 <= self.zeta <= self.channels:
            raise ValueError(f"ChannelSampling: zeta must lie in [1, {self.channels}], got {self.zeta}")


PrimitiveKind = Union[Conv, BatchNorm, ReLU, Sigmoid, GlobalPool, ChannelSampling]


def primitive_flops(p: PrimitiveKind) -> int:
    if isinstance(p, Conv):
        return p.height * p.width * p.kernels * p.channels * p.k * p.k
    if isinstance(p, ChannelSampling):
        # (size - 1) compares per subset and pixel; equals (zeta-1)*(C/zeta)*H*W when zeta | C
        subsets = math.ceil(p.channels / p.zeta)
        return (p.channels - subsets) * p.height * p.width
    if isinstance(p, (BatchNorm, Sigmoid)):
        return 4 * p.elements
    if isinstance(p, (ReLU, GlobalPool)):
        return p.elements
    raise TypeError(f"unknown primitive {p!r}")


# --- MODULES --- #

class ModuleName(str, Enum):
    SE = "se"
    CBAM = "cbam"
    FBS = "fbs"
    PIX = "pix"
    SQUEEZE = "squeeze"


@dataclass(frozen=True)
class SE:
    pass


@dataclass(frozen=True)
class CBAM:
    pass


@dataclass(frozen=True)
class FBS:
    k: int = 1


@dataclass(frozen=True)
class PiX:
    zeta: int = 1


@dataclass(frozen=True)
class SqueezeConv:
    """Dense 1x1 conv + BN + ReLU reducing C channels to ceil(C / zeta)."""

    zeta: int = 1


ModuleKind = Union[SE, CBAM, FBS, PiX, SqueezeConv]


def module_from_name(name: str, zeta: int = 1, topk: int = 1) -> ModuleKind:
    kind = ModuleName(name)
    return {
        ModuleName.SE: lambda: SE(),
        ModuleName.CBAM: lambda: CBAM(),
        ModuleName.FBS: lambda: FBS(k=topk),
        ModuleName.PIX: lambda: PiX(zeta=zeta),
        ModuleName.SQUEEZE: lambda: SqueezeConv(zeta=zeta),
    }[kind]()


@dataclass(frozen=True)
class CostTerm:
    label: str
    flops: int = 0
    elements: int = 0


@dataclass(frozen=True)
class CostReport:
    terms: tuple[CostTerm, ...]

    @property
    def total_flops(self) -> int:
        return sum(t.flops for t in self.terms)

    @property
    def total_memory_elements(self) -> int:
        return sum(t.elements for t in self.terms)

    @property
    def memory_bytes(self) -> int:
        return BYTES_PER_ELEMENT * self.total_memory_elements

    @property
    def memory_mb(self) -> float:
        return self.memory_bytes / 1e6

    def breakdown(self) -> list[tuple[str, int, int]]:
        """(label, flops, elements) per term."""
        return [(t.label, t.flops, t.elements) for t in self.terms]

    def to_frame(self, total: bool = True) -> pd.DataFrame:
        """Columns label, flops, bytes; a trailing ``total`` row unless disabled."""
        rows = [{"label": t.label, "flops": t.flops, "bytes": BYTES_PER_ELEMENT * t.elements} for t in self.terms]
        if total:
            rows.append({"label": "total", "flops": self.total_flops, "bytes": self.memory_bytes})
        return pd.DataFrame(rows, columns=["label", "flops", "bytes"])


def _validate_module(m: ModuleKind, C: int, H: int, W: int) -> None:
    _check_positive(type(m).__name__, C=C, H=H, W=W)
    if isinstance(m, FBS) and not 1 <= m.k <= C:
        raise ValueError(f"FBS: top-k must lie in [1, {C}], got {m.k}")
    if isinstance(m, (PiX, SqueezeConv)) and not 1 <= m.zeta <= C:
        raise ValueError(f"{type(m).__name__}: zeta must lie in [1, {C}], got {m.zeta}")


def module_flops(m: ModuleKind, C: int, H: int, W: int) -> CostReport:
    _validate_module(m, C, H, W)
    chw = C * H * W
    r = math.ceil(C / SE_REDUCTION)
    if isinstance(m, SE):
        terms = [
            CostTerm("global_pool", flops=primitive_flops(GlobalPool(C, H, W))),
            CostTerm("conv_squeeze", flops=primitive_flops(Conv(r, C, 1, 1, 1))),
            CostTerm("relu", flops=primitive_flops(ReLU(r, 1, 1))),
            CostTerm("conv_expand", flops=primitive_flops(Conv(C, r, 1, 1, 1))),
            CostTerm("sigmoid", flops=primitive_flops(Sigmoid(C, 1, 1))),
            CostTerm("broadcast_multiply", flops=chw),
        ]
    elif isinstance(m, CBAM):
        terms = [
            CostTerm("global_max_pool", flops=primitive_flops(GlobalPool(C, H, W))),
            CostTerm("global_avg_pool", flops=primitive_flops(GlobalPool(C, H, W))),
            CostTerm("conv_squeeze", flops=primitive_flops(Conv(r, C, 1, 1, 1))),
            CostTerm("relu", flops=primitive_flops(ReLU(r, 1, 1))),
            CostTerm("conv_expand", flops=primitive_flops(Conv(C, r, 1, 1, 1))),
            CostTerm("channel_sigmoid", flops=primitive_flops(Sigmoid(C, 1, 1))),
            CostTerm("sum", flops=C),
            CostTerm("channel_broadcast_multiply", flops=chw),
            CostTerm("channel_max_pool", flops=(C - 1) * H * W),
            CostTerm("channel_avg_pool", flops=(C - 1) * H * W),
            CostTerm("concat", flops=2 * H * W),
            CostTerm("spatial_conv", flops=primitive_flops(Conv(1, 2, 1, H, W))),
            CostTerm("spatial_sigmoid", flops=primitive_flops(Sigmoid(1, H, W))),
            CostTerm("spatial_broadcast_multiply", flops=chw),
        ]
    elif isinstance(m, FBS):
        terms = [
            CostTerm("global_pool", flops=primitive_flops(GlobalPool(C, H, W))),
            CostTerm("conv_squeeze", flops=primitive_flops(Conv(C, C, 1, 1, 1))),
            CostTerm("sigmoid", flops=primitive_flops(Sigmoid(C, 1, 1))),
            CostTerm("top_k", flops=sum(C - i for i in range(1, m.k + 1))),
            CostTerm("batchnorm", flops=primitive_flops(BatchNorm(C, H, W))),
            CostTerm("broadcast_multiply", flops=chw),
            CostTerm("relu", flops=primitive_flops(ReLU(C, H, W))),
        ]
    elif isinstance(m, PiX):
        s = math.ceil(C / m.zeta)
        terms = [
            CostTerm("global_pool", flops=primitive_flops(GlobalPool(C, H, W))),
            CostTerm("conv_squeeze", flops=primitive_flops(Conv(s, C, 1, 1, 1))),
            CostTerm("sigmoid", flops=primitive_flops(Sigmoid(s, 1, 1))),
            CostTerm("channel_fusion", flops=primitive_flops(ChannelSampling(C, H, W, m.zeta))),
        ]
    elif isinstance(m, SqueezeConv):
        s = math.ceil(C / m.zeta)
        terms = [
            CostTerm("conv", flops=primitive_flops(Conv(s, C, 1, H, W))),
            CostTerm("batchnorm", flops=primitive_flops(BatchNorm(s, H, W))),
            CostTerm("relu", flops=primitive_flops(ReLU(s, H, W))),
        ]
    else:
        raise TypeError(f"unknown module {m!r}")
    return CostReport(tuple(terms))


def module_memory(m: ModuleKind, C: int, H: int, W: int) -> CostReport:
    """Element counts per stage; in-place stages (ReLU, sigmoid, BN) hold no extra memory."""
    _validate_module(m, C, H, W)
    chw = C * H * W
    r = math.ceil(C / SE_REDUCTION)
    if isinstance(m, SE):
        terms = [
            CostTerm("global_pool", elements=C),
            CostTerm("conv_squeeze", elements=r),
            CostTerm("conv_expand", elements=C),
            CostTerm("broadcast_multiply", elements=chw),
        ]
    elif isinstance(m, CBAM):
        terms = [
            CostTerm("global_max_pool", elements=C),
            CostTerm("global_avg_pool", elements=C),
            CostTerm("conv_squeeze", elements=r),
            CostTerm("conv_expand", elements=C),
            CostTerm("sum", elements=C),
            CostTerm("channel_broadcast_multiply", elements=chw),
            CostTerm("channel_max_pool", elements=H * W),
            CostTerm("channel_avg_pool", elements=H * W),
            CostTerm("concat", elements=2 * H * W),
            CostTerm("spatial_conv", elements=H * W),
            CostTerm("spatial_broadcast_multiply", elements=chw),
        ]
    elif isinstance(m, FBS):
        terms = [
            CostTerm("global_pool", elements=C),
            CostTerm("conv_squeeze", elements=C),
            CostTerm("top_k", elements=chw),
            CostTerm("broadcast_multiply", elements=chw),
        ]
    elif isinstance(m, PiX):
        terms = [
            CostTerm("global_pool", elements=C),
            CostTerm("conv_squeeze", elements=math.ceil(C / m.zeta)),
            CostTerm("channel_fusion", elements=chw),
        ]
    elif isinstance(m, SqueezeConv):
        terms = [CostTerm("conv", elements=math.ceil(C / m.zeta) * H * W)]
    else:
        raise TypeError(f"unknown module {m!r}")
    return CostReport(tuple(terms))


def module_cost(m: ModuleKind, C: int, H: int, W: int) -> CostReport:
    """FLOPs and memory merged by term label, in FLOP-derivation order."""
    flops = module_flops(m, C, H, W)
    memory = {t.label: t.elements for t in module_memory(m, C, H, W).terms}
    terms = [CostTerm(t.label, t.flops, memory.pop(t.label, 0)) for t in flops.terms]
    terms.extend(CostTerm(label, 0, elements) for label, elements in memory.items())
    return CostReport(tuple(terms))


def module_flops_closed_form(m: ModuleKind, C: int, H: int, W: int) -> int:
    """Integer closed forms with r = ceil(C/16) and S = ceil(C/zeta)."""
    _validate_module(m, C, H, W)
    chw, hw = C * H * W, H * W
    r = math.ceil(C / SE_REDUCTION)
    if isinstance(m, SE):
        return 2 * chw + 2 * r * C + r + 4 * C
    if isinstance(m, CBAM):
        return 6 * chw + 6 * hw + 2 * r * C + r + 5 * C
    if isinstance(m, FBS):
        return 7 * chw + C * C + 4 * C + m.k * C - m.k * (m.k + 1) // 2
    s = math.ceil(C / m.zeta)
    if isinstance(m, PiX):
        return chw + s * C + 4 * s + (C - s) * hw
    if isinstance(m, SqueezeConv):
        return s * C * hw + 5 * s * hw
    raise TypeError(f"unknown module {m!r}")


def module_memory_closed_form(m: ModuleKind, C: int, H: int, W: int) -> int:
    _validate_module(m, C, H, W)
    chw, hw = C * H * W, H * W
    r = math.ceil(C / SE_REDUCTION)
    if isinstance(m, SE):
        return chw + 2 * C + r
    if isinstance(m, CBAM):
        return 2 * chw + 5 * hw + 4 * C + r
    if isinstance(m, FBS):
        return 2 * chw + 2 * C
    s = math.ceil(C / m.zeta)
    if isinstance(m, PiX):
        return chw + C + s
    if isinstance(m, SqueezeConv):
        return s * hw
    raise TypeError(f"unknown module {m!r}")


def squeeze_memory(C: int, H: int, W: int, zeta: int) -> tuple[int, int]:
    """(baseline, pix) element counts for squeezing C channels by zeta."""
    _check_positive("squeeze_memory", C=C, H=H, W=W, zeta=zeta)
    s = math.ceil(C / zeta)
    return s * H * W, C + s + s * H * W


# --- NETWORKS --- #

class SubstitutionMode(str, Enum):
    SQUEEZE = "squeeze"
    DOWNSCALE = "downscale"


@dataclass(frozen=True)
class PixSubstitution:
    """Squeeze mode also sets the bottleneck squeeze factor (inner width = out / zeta)."""

    zeta: int
    mode: SubstitutionMode = SubstitutionMode.SQUEEZE

    def __post_init__(self):
        if self.zeta < 1:
            raise ValueError(f"zeta must be >= 1, got {self.zeta}")
        object.__setattr__(self, "mode", SubstitutionMode(self.mode))


def network_layers(spec: NetworkSpec, pix: Optional[PixSubstitution] = None) -> list[TracedLayer]:
    if pix is None:
        return netspec.resolve(spec)
    if pix.mode is SubstitutionMode.SQUEEZE:
        layers = netspec.expand_blocks(spec.with_expansion(pix.zeta))
        replaced = netspec.squeeze_replace(layers)
        if replaced == layers:
            logger.warning("%s has no squeeze convs; squeeze-replace changes nothing", spec.name)
        layers = replaced
    else:
        layers = netspec.downscale_insert(netspec.expand_blocks(spec), pix.zeta)
    return netspec.trace(layers, spec.input_shape)


def squeeze_baseline(spec: NetworkSpec, pix: Optional[PixSubstitution]) -> NetworkSpec:
    """The unmodified network a substitution is compared against."""
    if pix is not None and pix.mode is SubstitutionMode.SQUEEZE:
        return spec.with_expansion(pix.zeta)
    return spec


def layer_flops(t: TracedLayer) -> int:
    layer = t.layer
    c, h, w = t.in_shape
    oc, oh, ow = t.out_shape
    if isinstance(layer, netspec.Conv):
        return primitive_flops(Conv(oc, c, layer.kernel, oh, ow))
    if isinstance(layer, netspec.BatchNorm):
        return primitive_flops(BatchNorm(c, h, w))
    if isinstance(layer, netspec.ReLU):
        return primitive_flops(ReLU(c, h, w))
    if isinstance(layer, netspec.MaxPool):
        return (layer.kernel * layer.kernel - 1) * oc * oh * ow
    if isinstance(layer, netspec.AvgPool):
        return layer.kernel * layer.kernel * oc * oh * ow
    if isinstance(layer, netspec.GlobalPool):
        return primitive_flops(GlobalPool(c, h, w))
    if isinstance(layer, netspec.FullyConnected):
        return c * h * w * layer.out_features
    if isinstance(layer, netspec.Pix):
        return module_flops(PiX(layer.zeta), c, h, w).total_flops
    if isinstance(layer, netspec.ResidualAdd):
        return oc * oh * ow
    raise NetworkSpecError(f"cannot cost layer type {type(layer).__name__}", layer.line, t.name)


def layer_params(t: TracedLayer, include_vectors: bool = False) -> int:
    layer = t.layer
    c, h, w = t.in_shape
    oc = t.out_shape[0]
    if isinstance(layer, netspec.Conv):
        vectors = oc if layer.bias else 0
        return oc * c * layer.kernel * layer.kernel + (vectors if include_vectors else 0)
    if isinstance(layer, netspec.FullyConnected):
        vectors = oc if layer.bias else 0
        return c * h * w * oc + (vectors if include_vectors else 0)
    if isinstance(layer, netspec.Pix):
        return oc * c + (oc if include_vectors else 0)
    if isinstance(layer, netspec.BatchNorm):
        return 2 * c if include_vectors else 0
    return 0


def network_flops(spec: NetworkSpec, pix: Optional[PixSubstitution] = None) -> CostReport:
    traced = network_layers(spec, pix)
    logger.debug("%s resolved to %d layers (pix=%s)", spec.name, len(traced), pix)
    return CostReport(tuple(CostTerm(t.name, flops=layer_flops(t)) for t in traced))


def network_params(spec: NetworkSpec, pix: Optional[PixSubstitution] = None, include_vectors: bool = False) -> int:
    """Kernel-bank scalars (conv kernels, FC weights, PiX theta); vectors on request."""
    return sum(layer_params(t, include_vectors) for t in network_layers(spec, pix))


def network_comparison(spec: NetworkSpec, pix: Optional[PixSubstitution] = None) -> pd.DataFrame:
    """Rows ``baseline`` and, when requested, ``pix`` with the FLOP reduction in percent."""
    base = squeeze_baseline(spec, pix)
    base_flops = network_flops(base).total_flops
    rows = [{"variant": "baseline", "flops": base_flops, "params": network_params(base), "reduction_pct": 0.0}]
    if pix is not None:
        flops = network_flops(spec, pix).total_flops
        rows.append({
            "variant": f"pix_{pix.mode.value}_z{pix.zeta}",
            "flops": flops,
            "params": network_params(spec, pix),
            "reduction_pct": round(100.0 * (base_flops - flops) / base_flops, 2),
        })
    return pd.DataFrame(rows, columns=["variant", "flops", "params", "reduction_pct"])
