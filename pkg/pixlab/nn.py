"""Minimal NCHW training stack: direct convolution, elementary layers, SGD with momentum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from pixlab import netspec
from pixlab.pix import (
    PixConfig,
    PixForwardCache,
    PixParameterError,
    PixParams,
    init_params,
    pix_backward_batch,
    pix_forward_batch,
)
from pixlab.tensor import make_rng

logger = logging.getLogger(__name__)

Arch = Literal["tiny_pixnet", "tiny_baseline"]
TINY_WIDTH = 32
NUM_CLASSES = 10


class LayerShapeError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, 3, 32, 32) in [0, 1]
    labels: np.ndarray  # (N,) ints in [0, 10)

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise DatasetFormatError(
                f"image count {len(self.images)} does not match label count {len(self.labels)}"
            )
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, limit: int | None) -> "Dataset":
        if limit is None:
            return self
        return Dataset(self.images[:limit], self.labels[:limit])


# --- FUNCTIONAL OPS --- #

def _out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int = 1, pad: int = 0):
    """Direct convolution, one kernel offset at a time. Returns (y, cache)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise LayerShapeError(f"conv2d: input {x.shape} does not match weights {w.shape}")
    n, _, h, wd = x.shape
    out_ch, _, k, _ = w.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(wd, k, stride, pad)
    if ho <= 0 or wo <= 0:
        raise LayerShapeError(f"conv2d: kernel {k} stride {stride} pad {pad} does not fit {h}x{wd}")

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    y = np.zeros((n, out_ch, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            y += np.tensordot(patch, w[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
    if b is not None:
        y += b[None, :, None, None]
    return y, (x, w, b is not None, stride, pad)


def conv2d_backward(dy: np.ndarray, cache):
    x, w, has_bias, stride, pad = cache
    n, c, h, wd = x.shape
    _, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(k):
        for j in range(k):
            window = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            dw[:, :, i, j] = np.tensordot(dy, xp[window], axes=([0, 2, 3], [0, 2, 3]))
            dxp[window] += np.tensordot(dy, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    db = dy.sum(axis=(0, 2, 3)) if has_bias else None
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def global_avg_pool_forward(x: np.ndarray):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dy: np.ndarray, shape) -> np.ndarray:
    _, _, h, w = shape
    return np.broadcast_to(dy[:, :, None, None] / (h * w), shape).copy()


def fully_connected_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None):
    flat = x.reshape(len(x), -1)
    if flat.shape[1] != w.shape[1]:
        raise LayerShapeError(f"fully_connected: {flat.shape[1]} input features, weights expect {w.shape[1]}")
    y = flat @ w.T
    if b is not None:
        y = y + b
    return y, (x.shape, flat, w, b is not None)


def fully_connected_backward(dy: np.ndarray, cache):
    shape, flat, w, has_bias = cache
    dx = (dy @ w).reshape(shape)
    dw = dy.T @ flat
    db = dy.sum(axis=0) if has_bias else None
    return dx, dw, db


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean loss over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (len(logits),):
        raise LayerShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LayerShapeError(f"labels must lie in [0, {logits.shape[1]})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(logits)
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


# --- LAYERS --- #

class Layer:
    kind = "layer"

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache):
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, w: np.ndarray, b: np.ndarray | None = None, stride: int = 1, pad: int = 0):
        super().__init__()
        self.params["w"] = w
        if b is not None:
            self.params["b"] = b
        self.stride = stride
        self.pad = pad

    def forward(self, x):
        return conv2d_forward(x, self.params["w"], self.params.get("b"), self.stride, self.pad)

    def backward(self, dy, cache):
        dx, dw, db = conv2d_backward(dy, cache)
        grads = {"w": dw}
        if db is not None:
            grads["b"] = db
        return dx, grads


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        return relu_forward(x)

    def backward(self, dy, cache):
        return relu_backward(dy, cache), {}


class GlobalAvgPool(Layer):
    kind = "gpool"

    def forward(self, x):
        return global_avg_pool_forward(x)

    def backward(self, dy, cache):
        return global_avg_pool_backward(dy, cache), {}


class FullyConnected(Layer):
    kind = "fc"

    def __init__(self, w: np.ndarray, b: np.ndarray | None = None):
        super().__init__()
        self.params["w"] = w
        if b is not None:
            self.params["b"] = b

    def forward(self, x):
        return fully_connected_forward(x, self.params["w"], self.params.get("b"))

    def backward(self, dy, cache):
        dx, dw, db = fully_connected_backward(dy, cache)
        grads = {"w": dw}
        if db is not None:
            grads["b"] = db
        return dx, grads


class Pix(Layer):
    kind = "pix"

    def __init__(self, cfg: PixConfig, params: PixParams):
        super().__init__()
        self.cfg = cfg
        self.params["theta"] = params.theta
        self.params["beta"] = params.beta

    @property
    def pix_params(self) -> PixParams:
        return PixParams(theta=self.params["theta"], beta=self.params["beta"])

    def forward(self, x):
        return pix_forward_batch(x, self.pix_params, self.cfg)

    def backward(self, dy, cache: list[PixForwardCache]):
        dx, dtheta, dbeta = pix_backward_batch(dy, cache, self.pix_params, self.cfg)
        return dx, {"theta": dtheta, "beta": dbeta}


# --- MODEL --- #

@dataclass
class Model:
    layers: list[Layer]
    lr: float = 0.05
    momentum: float = 0.9
    dtype: type = np.float32
    velocities: dict[str, np.ndarray] = field(default_factory=dict)

    def named_parameters(self):
        for index, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{index}.{layer.kind}.{name}", value

    def parameter_count(self) -> int:
        return sum(int(v.size) for _, v in self.named_parameters())

    def forward(self, x: np.ndarray):
        caches = []
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out, caches

    def backward(self, dlogits: np.ndarray, caches) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        dy = dlogits
        for index in reversed(range(len(self.layers))):
            layer = self.layers[index]
            dy, layer_grads = layer.backward(dy, caches[index])
            for name, g in layer_grads.items():
                grads[f"{index}.{layer.kind}.{name}"] = g
        return grads

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        logits, caches = self.forward(x)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        grads = self.backward(dlogits.astype(self.dtype, copy=False), caches)
        return loss, grads, logits, caches

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        return logits.argmax(axis=1)


def sgd_step(model: Model, grads: dict[str, np.ndarray], lr: float | None = None, momentum: float | None = None) -> Model:
    """v <- momentum * v + g; w <- w - lr * v, in place."""
    lr = model.lr if lr is None else lr
    momentum = model.momentum if momentum is None else momentum
    params = dict(model.named_parameters())
    for name, g in grads.items():
        if name not in params:
            raise LayerShapeError(f"gradient for unknown parameter {name}")
        w = params[name]
        if g.shape != w.shape:
            raise LayerShapeError(f"{name}: gradient dims {g.shape} do not match parameter dims {w.shape}")
        v = model.velocities.get(name)
        v = g.astype(w.dtype, copy=True) if v is None else momentum * v + g
        model.velocities[name] = v
        w -= lr * v
    return model


# --- NETWORK BUILDING --- #

def tiny_spec(arch: Arch, zeta: int) -> netspec.NetworkSpec:
    """The desk-scale CIFAR network as a NetworkSpec."""
    if zeta < 1 or zeta > TINY_WIDTH:
        raise PixParameterError(f"zeta must lie in [1, {TINY_WIDTH}] for {arch}, got {zeta}")
    squeezed = math.ceil(TINY_WIDTH / zeta)
    if arch == "tiny_pixnet":
        squeeze = f"pix zeta={zeta}"
    elif arch == "tiny_baseline":
        squeeze = f"conv out={squeezed} k=1 bias=1\nrelu"
    else:
        raise ValueError(f"unknown arch {arch!r}; expected tiny_pixnet or tiny_baseline")
    text = "\n".join([
        "input 3 32 32",
        f"conv name=conv1 out={TINY_WIDTH} k=3 pad=1 bias=1",
        "relu",
        squeeze,
        f"conv name=conv2 out={TINY_WIDTH} k=3 pad=1 bias=1",
        "relu",
        squeeze,
        "gpool",
        f"fc name=fc out={NUM_CLASSES}",
    ])
    return netspec.parse_network_spec(text, name=arch)


def build_from_spec(
    spec: netspec.NetworkSpec,
    cfg: PixConfig,
    seed: int,
    dtype=np.float32,
    zero_head: bool = True,
) -> list[Layer]:
    """Instantiate trainable layers; only conv, relu, pix, gpool and fc are supported.

    Convs get He-normal weights, PiX Xavier-uniform theta, biases start at
    zero. With ``zero_head`` the classifier starts at zero so every class is
    equally likely.
    """
    rng = make_rng(seed)
    layers: list[Layer] = []
    for t in netspec.resolve(spec):
        layer = t.layer
        c, h, w = t.in_shape
        if isinstance(layer, netspec.Conv):
            fan_in = c * layer.kernel * layer.kernel
            weights = rng.standard_normal((layer.out_channels, c, layer.kernel, layer.kernel)) * math.sqrt(2.0 / fan_in)
            bias = np.zeros(layer.out_channels, dtype=dtype) if layer.bias else None
            layers.append(Conv2d(weights.astype(dtype), bias, layer.stride, layer.pad))
        elif isinstance(layer, netspec.ReLU):
            layers.append(ReLU())
        elif isinstance(layer, netspec.Pix):
            layer_cfg = PixConfig(zeta=layer.zeta, tau=cfg.tau, op_mode=cfg.op_mode, activation=cfg.activation)
            layers.append(Pix(layer_cfg, init_params(c, layer_cfg, rng, dtype)))
        elif isinstance(layer, netspec.GlobalPool):
            layers.append(GlobalAvgPool())
        elif isinstance(layer, netspec.FullyConnected):
            features = c * h * w
            if zero_head:
                weights = np.zeros((layer.out_features, features), dtype=dtype)
            else:
                weights = (rng.standard_normal((layer.out_features, features)) / math.sqrt(features)).astype(dtype)
            bias = np.zeros(layer.out_features, dtype=dtype) if layer.bias else None
            layers.append(FullyConnected(weights, bias))
        else:
            raise netspec.NetworkSpecError(
                f"{type(layer).__name__} layers are not trainable here", layer.line, t.name
            )
    return layers


def build_network(
    arch: Arch,
    cfg: PixConfig,
    seed: int,
    dtype=np.float32,
    lr: float = 0.05,
    momentum: float = 0.9,
    zero_head: bool = True,
) -> Model:
    spec = tiny_spec(arch, cfg.zeta)
    model = Model(build_from_spec(spec, cfg, seed, dtype, zero_head), lr=lr, momentum=momentum, dtype=dtype)
    logger.debug("built %s zeta=%d with %d parameters", arch, cfg.zeta, model.parameter_count())
    return model
