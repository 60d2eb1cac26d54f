"""Central finite-difference checks for the PiX backward pass and the tiny networks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from pixlab.nn import Model, Pix, ReLU, build_network, softmax_cross_entropy
from pixlab.pix import (
    OpMode,
    PixConfig,
    PixParameterError,
    PixParams,
    Reduction,
    pix_backward,
    pix_forward,
)
from pixlab.tensor import make_rng, random_array

logger = logging.getLogger(__name__)

OP_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-4
NETWORK_FLOOR = 1e-7
FD_STEP = 1e-5
KINK_MARGIN = 1e-3
FULL_CHECK_SIZE = 256


class GradCheckSamplingError(RuntimeError):
    pass


@dataclass
class GradCheckResult:
    errors: dict[str, float]
    tolerance: float
    attempts: int = 1
    skipped: int = 0
    coordinates: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """max|a - n| / max(max|a|, max|n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_gradient(f, array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. a contiguous ``array``, perturbed in place."""
    flat = array.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = f()
        flat[i] = original - step
        minus = f()
        flat[i] = original
        grad[i] = (plus - minus) / (2 * step)
    return grad


# --- PIX OPERATOR --- #

def _well_conditioned(x: np.ndarray, cache, cfg: PixConfig, margin: float) -> bool:
    if np.abs(x).min() <= margin:
        return False
    if cfg.op_mode is OpMode.PICK_OR_MIX and np.abs(cache.p - cfg.tau).min() <= margin:
        return False
    for i, (lo, hi) in enumerate(cache.partition):
        if cache.reductions[i] is Reduction.AVG or hi - lo < 2:
            continue
        block = np.sort(x[0, lo:hi], axis=0)
        if cache.reductions[i] is Reduction.MAX:
            gap = block[-1] - block[-2]
        else:
            gap = block[1] - block[0]
        if gap.min() <= margin:
            return False
    return True


def pix_gradcheck(
    channels: int,
    height: int,
    width: int,
    cfg: PixConfig,
    seed: int,
    step: float = FD_STEP,
    margin: float = KINK_MARGIN,
    max_attempts: int = 200,
) -> GradCheckResult:
    """Draw a well-conditioned random instance in float64 and compare gradients.

    Instances where some |x|, |p - tau| or max/min margin is within ``margin``
    are redrawn from the same stream.
    """
    if cfg.zeta > channels:
        raise PixParameterError(f"zeta={cfg.zeta} exceeds C={channels}")
    rng = make_rng(seed)
    subsets = cfg.subsets(channels)

    for attempt in range(1, max_attempts + 1):
        x = random_array((1, channels, height, width), rng, dtype=np.float64)
        params = PixParams(
            theta=random_array((subsets, channels), rng, dtype=np.float64),
            beta=random_array((subsets,), rng, dtype=np.float64),
        )
        dy = random_array((1, subsets, height, width), rng, dtype=np.float64)
        _, cache = pix_forward(x, params, cfg)
        if _well_conditioned(x, cache, cfg, margin):
            break
    else:
        raise GradCheckSamplingError(
            f"no well-conditioned instance in {max_attempts} draws for C={channels} zeta={cfg.zeta}"
        )

    dx, dtheta, dbeta = pix_backward(dy, cache, params, cfg)

    def loss() -> float:
        out, _ = pix_forward(x, params, cfg)
        return float((out * dy).sum())

    errors = {
        "dx": relative_error(dx, numeric_gradient(loss, x, step).reshape(x.shape)),
        "dtheta": relative_error(dtheta, numeric_gradient(loss, params.theta, step).reshape(dtheta.shape)),
        "dbeta": relative_error(dbeta, numeric_gradient(loss, params.beta, step).reshape(dbeta.shape)),
    }
    logger.debug("pix gradcheck seed=%d attempts=%d errors=%s", seed, attempt, errors)
    return GradCheckResult(errors=errors, tolerance=OP_TOLERANCE, attempts=attempt)


# --- WHOLE NETWORK --- #

def _kink_signature(model: Model, caches) -> list[np.ndarray]:
    """ReLU sign patterns plus PiX branch and argmax choices of one forward."""
    signature = []
    for layer, cache in zip(model.layers, caches):
        if isinstance(layer, ReLU):
            signature.append(cache > 0)
        elif isinstance(layer, Pix):
            for sample in cache:
                signature.append(np.array([r.value for r in sample.reductions]))
                signature.append(sample.selected)
    return signature


def _same_signature(left, right) -> bool:
    return len(left) == len(right) and all(np.array_equal(a, b) for a, b in zip(left, right))


def network_gradcheck(
    arch: str,
    cfg: PixConfig,
    seed: int,
    batch: int = 4,
    image_size: int = 8,
    coords_per_tensor: int = 8,
    step: float = FD_STEP,
    full_check_size: int = FULL_CHECK_SIZE,
) -> GradCheckResult:
    """Check every parameter tensor of a float64 tiny network on random data.

    Tensors of at most ``full_check_size`` entries are checked at every
    coordinate; larger ones at ``coords_per_tensor`` random coordinates. A
    coordinate whose +-step perturbation flips a ReLU sign, a PiX branch or a
    PiX argmax is skipped. A tensor left with fewer than
    ``min(coords_per_tensor, size)`` usable coordinates raises
    ``GradCheckSamplingError``.
    """
    rng = make_rng(seed)
    model = build_network(arch, cfg, seed, dtype=np.float64, zero_head=False)
    x = random_array((batch, 3, image_size, image_size), rng, dtype=np.float64)
    labels = rng.integers(0, 10, size=batch)

    _, grads, _, caches = model.loss_and_grads(x, labels)
    reference = _kink_signature(model, caches)

    def loss_and_signature():
        logits, fwd_caches = model.forward(x)
        loss, _ = softmax_cross_entropy(logits, labels)
        return loss, _kink_signature(model, fwd_caches)

    errors: dict[str, float] = {}
    coordinates: dict[str, int] = {}
    skipped = 0
    for name, value in model.named_parameters():
        flat = value.reshape(-1)
        candidates = rng.permutation(flat.size)
        wanted = flat.size if flat.size <= full_check_size else coords_per_tensor
        analytic, numeric = [], []
        for i in candidates:
            if len(analytic) == wanted:
                break
            original = flat[i]
            flat[i] = original + step
            plus, sig_plus = loss_and_signature()
            flat[i] = original - step
            minus, sig_minus = loss_and_signature()
            flat[i] = original
            if not (_same_signature(reference, sig_plus) and _same_signature(reference, sig_minus)):
                skipped += 1
                continue
            analytic.append(grads[name].reshape(-1)[i])
            numeric.append((plus - minus) / (2 * step))
        need = min(coords_per_tensor, flat.size)
        if len(analytic) < need:
            raise GradCheckSamplingError(f"{name}: only {len(analytic)} of {flat.size} coordinates avoid a kink, need {need}")
        errors[name] = relative_error(np.array(analytic), np.array(numeric), NETWORK_FLOOR)
        coordinates[name] = len(analytic)

    logger.debug("network gradcheck %s seed=%d skipped=%d errors=%s", arch, seed, skipped, errors)
    return GradCheckResult(
        errors=errors, tolerance=NETWORK_TOLERANCE, skipped=skipped, coordinates=coordinates
    )
