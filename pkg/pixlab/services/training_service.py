"""Desk-scale training loop and evaluation for the tiny CIFAR networks."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from pixlab.nn import Dataset, Model, Pix, TrainingError, sgd_step, softmax_cross_entropy
from pixlab.pix import branch_fraction
from pixlab.tensor import make_rng
from pixlab.utils.checkpoint import save_checkpoint

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "loss", "accuracy"]


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def train(
    model: Model,
    data: Dataset,
    epochs: int,
    batch_size: int,
    lr: float | None = None,
    seed: int = 1,
    momentum: float | None = None,
    checkpoint_dir: str | Path | None = None,
):
    """Mini-batch SGD over a seeded shuffle. Returns (model, per-epoch log).

    Loss and accuracy in the log are running values over the epoch's
    training batches, weighted by batch size.
    """
    if len(data) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if epochs < 1 or batch_size < 1:
        raise TrainingError(f"epochs and batch_size must be >= 1, got {epochs} and {batch_size}")
    if lr is not None:
        model.lr = lr
    if momentum is not None:
        model.momentum = momentum

    rng = make_rng(seed)
    rows = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(data))
        loss_sum, correct = 0.0, 0
        picked, subsets = 0.0, 0
        for batch in _batches(order, batch_size):
            x = data.images[batch]
            y = data.labels[batch]
            loss, grads, logits, caches = model.loss_and_grads(x, y)
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss} in epoch {epoch}")
            sgd_step(model, grads)
            loss_sum += loss * len(batch)
            correct += int((logits.argmax(axis=1) == y).sum())
            for layer, cache in zip(model.layers, caches):
                if isinstance(layer, Pix):
                    count = sum(len(c.reductions) for c in cache)
                    picked += branch_fraction(cache) * count
                    subsets += count

        row = {"epoch": epoch, "loss": loss_sum / len(data), "accuracy": correct / len(data)}
        rows.append(row)
        logger.info(
            "epoch %d | loss %.4f | accuracy %.4f | max-branch share %.3f",
            epoch, row["loss"], row["accuracy"], picked / subsets if subsets else 0.0,
        )
        if checkpoint_dir is not None:
            save_checkpoint(model, checkpoint_dir, epoch)

    return model, pd.DataFrame(rows, columns=LOG_COLUMNS)


def evaluate(model: Model, data: Dataset, batch_size: int = 256) -> tuple[float, float]:
    """Mean loss and accuracy on held-out data, without touching the parameters."""
    if len(data) == 0:
        raise TrainingError("cannot evaluate on an empty dataset")
    loss_sum, correct = 0.0, 0
    for batch in _batches(np.arange(len(data)), batch_size):
        logits, _ = model.forward(data.images[batch])
        loss, _ = softmax_cross_entropy(logits, data.labels[batch])
        loss_sum += loss * len(batch)
        correct += int((logits.argmax(axis=1) == data.labels[batch]).sum())
    return loss_sum / len(data), correct / len(data)
