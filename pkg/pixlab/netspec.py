"""NetworkSpec: a line-oriented network description shared by the cost model and the trainer.

Format, one directive per line (``#`` starts a comment)::

    input 3 224 224
    expansion 4
    conv name=conv1 out=64 k=7 stride=2 pad=3
    bn
    relu
    maxpool k=3 stride=2 pad=1
    bottleneck name=layer1 out=256 blocks=3 stride=1
    basic name=layer1 out=64 blocks=2 stride=1
    residual name=block
      conv out=64 k=3 pad=1
      bn
    shortcut
      conv out=64 k=1 role=shortcut
    end
    pix zeta=2 tau=0.5
    gpool
    avgpool k=2 stride=2
    fc out=1000

``conv`` also accepts ``bias=1``, ``role=squeeze|shortcut`` and ``in=N``
(checked against the running channel count).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

logger = logging.getLogger(__name__)

SPEC_DIR = Path(__file__).resolve().parent / "specs"

Shape = tuple[int, int, int]


class NetworkSpecError(ValueError):
    def __init__(self, message: str, line: int | None = None, layer: str | None = None):
        self.line = line
        self.layer = layer
        prefix = f"line {line}: " if line else ""
        where = f"{layer}: " if layer else ""
        super().__init__(f"{prefix}{where}{message}")


# --- LAYER DESCRIPTORS --- #

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    bias: bool = False
    role: Optional[str] = None
    in_channels: Optional[int] = None
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BatchNorm:
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ReLU:
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int = 1
    pad: int = 0
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AvgPool:
    kernel: int
    stride: int = 1
    pad: int = 0
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class GlobalPool:
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FullyConnected:
    out_features: int
    bias: bool = True
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Pix:
    """zeta is fixed, or derived from ``out_channels`` when the PiX stands in for a squeeze conv."""

    zeta: Optional[int] = None
    tau: float = 0.5
    out_channels: Optional[int] = None
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Residual:
    body: tuple
    shortcut: tuple = ()
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BlockGroup:
    kind: Literal["bottleneck", "basic"]
    out_channels: int
    blocks: int
    stride: int = 1
    name: str = ""
    line: int = field(default=0, compare=False)


Layer = Union[Conv, BatchNorm, ReLU, MaxPool, AvgPool, GlobalPool, FullyConnected, Pix, Residual, BlockGroup]


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: Shape
    layers: tuple
    expansion: int = 4

    def with_expansion(self, expansion: int) -> "NetworkSpec":
        return replace(self, expansion=expansion)


@dataclass(frozen=True)
class TracedLayer:
    name: str
    layer: Layer
    in_shape: Shape
    out_shape: Shape


@dataclass(frozen=True)
class ResidualAdd:
    name: str
    line: int = field(default=0, compare=False)


# --- LINE VALIDATION --- #

class _Line(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    name: str = ""


class _ConvLine(_Line):
    out: int = Field(gt=0)
    k: int = Field(1, gt=0)
    stride: int = Field(1, gt=0)
    pad: int = Field(0, ge=0)
    bias: bool = False
    role: Optional[Literal["squeeze", "shortcut"]] = None
    in_: Optional[int] = Field(None, alias="in", gt=0)


class _PoolLine(_Line):
    k: int = Field(gt=0)
    stride: Optional[int] = Field(None, gt=0)
    pad: int = Field(0, ge=0)


class _FcLine(_Line):
    out: int = Field(gt=0)
    bias: bool = True


class _PixLine(_Line):
    zeta: int = Field(gt=0)
    tau: float = Field(0.5, ge=0.0, le=1.0)


class _GroupLine(_Line):
    out: int = Field(gt=0)
    blocks: int = Field(gt=0)
    stride: int = Field(1, gt=0)


def _options(tokens: list[str], line_no: int, directive: str) -> dict[str, str]:
    options = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise NetworkSpecError(f"expected key=value, got {token!r}", line_no, directive)
        options[key] = value
    return options


def _validate(model: type[_Line], tokens: list[str], line_no: int, directive: str) -> _Line:
    options = _options(tokens, line_no, directive)
    try:
        return model.model_validate(options)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or directive}: {err['msg']}" for err in exc.errors()
        )
        raise NetworkSpecError(problems, line_no, options.get("name") or directive) from None


def _int_args(tokens: list[str], count: int, line_no: int, directive: str) -> list[int]:
    if len(tokens) != count:
        raise NetworkSpecError(f"expected {count} integers, got {tokens}", line_no, directive)
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise NetworkSpecError(f"expected integers, got {tokens}", line_no, directive) from None
    if any(v <= 0 for v in values):
        raise NetworkSpecError(f"values must be positive, got {values}", line_no, directive)
    return values


def parse_network_spec(text: str, name: str = "network") -> NetworkSpec:
    input_shape: Shape | None = None
    expansion = 4
    # each frame: [residual_line_no, residual_name, body, shortcut, in_shortcut]
    stack: list[list] = []
    top: list = []

    def emit(layer) -> None:
        if stack:
            frame = stack[-1]
            (frame[3] if frame[4] else frame[2]).append(layer)
        else:
            top.append(layer)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        directive, *tokens = content.split()
        directive = directive.lower()

        if directive == "input":
            if input_shape is not None:
                raise NetworkSpecError("duplicate input directive", line_no, "input")
            input_shape = tuple(_int_args(tokens, 3, line_no, "input"))  # type: ignore[assignment]
            continue
        if input_shape is None:
            raise NetworkSpecError("the first directive must be 'input C H W'", line_no, directive)

        if directive == "expansion":
            expansion = _int_args(tokens, 1, line_no, "expansion")[0]
        elif directive == "conv":
            opts = _validate(_ConvLine, tokens, line_no, directive)
            emit(Conv(opts.out, opts.k, opts.stride, opts.pad, opts.bias, opts.role, opts.in_, opts.name, line_no))
        elif directive == "bn":
            emit(BatchNorm(_validate(_Line, tokens, line_no, directive).name, line_no))
        elif directive == "relu":
            emit(ReLU(_validate(_Line, tokens, line_no, directive).name, line_no))
        elif directive in ("maxpool", "avgpool"):
            opts = _validate(_PoolLine, tokens, line_no, directive)
            cls = MaxPool if directive == "maxpool" else AvgPool
            emit(cls(opts.k, opts.stride or opts.k, opts.pad, opts.name, line_no))
        elif directive == "gpool":
            emit(GlobalPool(_validate(_Line, tokens, line_no, directive).name, line_no))
        elif directive == "fc":
            opts = _validate(_FcLine, tokens, line_no, directive)
            emit(FullyConnected(opts.out, opts.bias, opts.name, line_no))
        elif directive == "pix":
            opts = _validate(_PixLine, tokens, line_no, directive)
            emit(Pix(zeta=opts.zeta, tau=opts.tau, name=opts.name, line=line_no))
        elif directive in ("bottleneck", "basic"):
            opts = _validate(_GroupLine, tokens, line_no, directive)
            emit(BlockGroup(directive, opts.out, opts.blocks, opts.stride, opts.name, line_no))  # type: ignore[arg-type]
        elif directive == "residual":
            opts = _validate(_Line, tokens, line_no, directive)
            stack.append([line_no, opts.name, [], [], False])
        elif directive == "shortcut":
            if not stack or stack[-1][4]:
                raise NetworkSpecError("'shortcut' outside a residual block", line_no, directive)
            stack[-1][4] = True
        elif directive == "end":
            if not stack:
                raise NetworkSpecError("'end' without a matching 'residual'", line_no, directive)
            start, block_name, body, shortcut, _ = stack.pop()
            if not body:
                raise NetworkSpecError("residual block has an empty body", start, block_name or "residual")
            emit(Residual(tuple(body), tuple(shortcut), block_name, start))
        else:
            raise NetworkSpecError(f"unknown directive {directive!r}", line_no, directive)

    if stack:
        raise NetworkSpecError("residual block is never closed", stack[-1][0], stack[-1][1] or "residual")
    if input_shape is None:
        raise NetworkSpecError("missing 'input C H W' directive")
    return NetworkSpec(name=name, input_shape=input_shape, layers=tuple(top), expansion=expansion)


def load_network_spec(path: str | Path) -> NetworkSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read network spec {path}: {exc}") from exc
    return parse_network_spec(text, name=path.stem)


def bundled_spec(name: str) -> NetworkSpec:
    """Load one of the shipped specs (resnet18, resnet50, resnet101, resnet152, vgg16)."""
    path = SPEC_DIR / f"{name}.net"
    if not path.exists():
        available = sorted(p.stem for p in SPEC_DIR.glob("*.net"))
        raise FileNotFoundError(f"no bundled spec {name!r}; available: {', '.join(available)}")
    return load_network_spec(path)


# --- EXPANSION & TRACING --- #

def expand_blocks(spec: NetworkSpec) -> tuple:
    """Unroll bottleneck/basic groups into explicit residual blocks."""
    channels = spec.input_shape[0]

    def walk(layers, channels):
        out = []
        for layer in layers:
            if isinstance(layer, BlockGroup):
                blocks, channels = _expand_group(layer, channels, spec.expansion)
                out.extend(blocks)
                continue
            if isinstance(layer, Residual):
                body, body_channels = walk(layer.body, channels)
                shortcut, _ = walk(layer.shortcut, channels)
                layer = replace(layer, body=tuple(body), shortcut=tuple(shortcut))
                channels = body_channels
            elif isinstance(layer, Conv):
                channels = layer.out_channels
            elif isinstance(layer, FullyConnected):
                channels = layer.out_features
            elif isinstance(layer, Pix) and layer.zeta:
                channels = math.ceil(channels / layer.zeta)
            out.append(layer)
        return out, channels

    layers, _ = walk(spec.layers, channels)
    return tuple(layers)


def _expand_group(group: BlockGroup, channels: int, expansion: int):
    layers = []
    for b in range(group.blocks):
        stride = group.stride if b == 0 else 1
        prefix = f"{group.name or group.kind}.{b}"
        if group.kind == "bottleneck":
            if group.out_channels % expansion:
                raise NetworkSpecError(
                    f"out={group.out_channels} is not divisible by expansion {expansion}", group.line, group.name
                )
            width = group.out_channels // expansion
            body = (
                Conv(width, 1, role="squeeze", name=f"{prefix}.conv1", line=group.line),
                BatchNorm(f"{prefix}.bn1", group.line),
                ReLU(f"{prefix}.relu1", group.line),
                Conv(width, 3, stride, 1, name=f"{prefix}.conv2", line=group.line),
                BatchNorm(f"{prefix}.bn2", group.line),
                ReLU(f"{prefix}.relu2", group.line),
                Conv(group.out_channels, 1, name=f"{prefix}.conv3", line=group.line),
                BatchNorm(f"{prefix}.bn3", group.line),
            )
        else:
            body = (
                Conv(group.out_channels, 3, stride, 1, name=f"{prefix}.conv1", line=group.line),
                BatchNorm(f"{prefix}.bn1", group.line),
                ReLU(f"{prefix}.relu1", group.line),
                Conv(group.out_channels, 3, 1, 1, name=f"{prefix}.conv2", line=group.line),
                BatchNorm(f"{prefix}.bn2", group.line),
            )
        shortcut = ()
        if stride != 1 or channels != group.out_channels:
            shortcut = (
                Conv(group.out_channels, 1, stride, role="shortcut", name=f"{prefix}.downsample", line=group.line),
                BatchNorm(f"{prefix}.downsample_bn", group.line),
            )
        layers.append(Residual(body, shortcut, prefix, group.line))
        layers.append(ReLU(f"{prefix}.relu", group.line))
        channels = group.out_channels
    return layers, channels


def _window_out(size: int, kernel: int, stride: int, pad: int, layer: str, line: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out <= 0:
        raise NetworkSpecError(
            f"window k={kernel} stride={stride} pad={pad} does not fit spatial size {size}", line, layer
        )
    return out


def _label(layer, index: int) -> str:
    return layer.name or f"{index}:{type(layer).__name__.lower()}"


def trace(layers, input_shape: Shape) -> list[TracedLayer]:
    """Propagate shapes through ``layers`` and resolve every descriptor.

    Residual bodies and shortcuts are flattened in order, followed by a
    ``ResidualAdd`` entry. Raises ``NetworkSpecError`` on any inconsistency.
    """
    traced: list[TracedLayer] = []

    def walk(layers, shape: Shape) -> Shape:
        for layer in layers:
            index = len(traced)
            label = _label(layer, index)
            c, h, w = shape
            if isinstance(layer, BlockGroup):
                raise NetworkSpecError("block groups must be expanded before tracing", layer.line, label)
            if isinstance(layer, Residual):
                out = walk(layer.body, shape)
                short = walk(layer.shortcut, shape) if layer.shortcut else shape
                if out != short:
                    raise NetworkSpecError(f"body yields {out} but shortcut yields {short}", layer.line, label)
                traced.append(TracedLayer(f"{label}.add", ResidualAdd(f"{label}.add", layer.line), out, out))
                shape = out
                continue

            if isinstance(layer, Conv):
                if layer.in_channels is not None and layer.in_channels != c:
                    raise NetworkSpecError(
                        f"declares in={layer.in_channels} but receives {c} channels", layer.line, label
                    )
                layer = replace(layer, in_channels=c)
                out = (
                    layer.out_channels,
                    _window_out(h, layer.kernel, layer.stride, layer.pad, label, layer.line),
                    _window_out(w, layer.kernel, layer.stride, layer.pad, label, layer.line),
                )
            elif isinstance(layer, (MaxPool, AvgPool)):
                out = (
                    c,
                    _window_out(h, layer.kernel, layer.stride, layer.pad, label, layer.line),
                    _window_out(w, layer.kernel, layer.stride, layer.pad, label, layer.line),
                )
            elif isinstance(layer, GlobalPool):
                out = (c, 1, 1)
            elif isinstance(layer, FullyConnected):
                out = (layer.out_features, 1, 1)
            elif isinstance(layer, Pix):
                zeta = layer.zeta
                if zeta is None:
                    zeta = math.ceil(c / layer.out_channels)
                    if math.ceil(c / zeta) != layer.out_channels:
                        raise NetworkSpecError(
                            f"no integer zeta maps {c} channels onto {layer.out_channels}", layer.line, label
                        )
                if zeta > c:
                    raise NetworkSpecError(f"zeta={zeta} exceeds the {c} input channels", layer.line, label)
                layer = replace(layer, zeta=zeta)
                out = (math.ceil(c / zeta), h, w)
            else:
                out = shape
            traced.append(TracedLayer(label, layer, shape, out))
            shape = out
        return shape

    walk(layers, input_shape)
    return traced


def resolve(spec: NetworkSpec) -> list[TracedLayer]:
    return trace(expand_blocks(spec), spec.input_shape)


# --- PIX SUBSTITUTION --- #

def squeeze_replace(layers) -> tuple:
    """Swap each ``role=squeeze`` conv with its BN and ReLU for a width-matched PiX."""
    out = []
    i = 0
    layers = tuple(layers)
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, Residual):
            out.append(replace(layer, body=squeeze_replace(layer.body), shortcut=squeeze_replace(layer.shortcut)))
        elif isinstance(layer, Conv) and layer.role == "squeeze":
            label = layer.name or "squeeze conv"
            if layer.kernel != 1 or layer.stride != 1 or layer.pad != 0:
                raise NetworkSpecError("a squeeze conv must be 1x1 with stride 1 and no padding", layer.line, label)
            tail = layers[i + 1:i + 3]
            if len(tail) != 2 or not isinstance(tail[0], BatchNorm) or not isinstance(tail[1], ReLU):
                raise NetworkSpecError("a squeeze conv must be followed by bn and relu", layer.line, label)
            out.append(Pix(out_channels=layer.out_channels, name=f"{label}.pix", line=layer.line))
            i += 3
            continue
        else:
            out.append(layer)
        i += 1
    return tuple(out)


def downscale_insert(layers, zeta: int, _seen_stem: list | None = None) -> tuple:
    """Put a PiX(zeta) in front of every conv except the stem and shortcut convs."""
    seen_stem = [False] if _seen_stem is None else _seen_stem
    out = []
    for layer in layers:
        if isinstance(layer, Residual):
            body = downscale_insert(layer.body, zeta, seen_stem)
            out.append(replace(layer, body=body))
            continue
        if isinstance(layer, Conv) and layer.role != "shortcut":
            if seen_stem[0]:
                name = f"{layer.name}.pix" if layer.name else ""
                out.append(Pix(zeta=zeta, name=name, line=layer.line))
                layer = replace(layer, in_channels=None)
            seen_stem[0] = True
        out.append(layer)
    return tuple(out)
