"""CIFAR-10 binary batch reader.

Each record is one label byte followed by 3072 pixel bytes: the 1024 red
values, then green, then blue, each plane row-major over 32x32.
"""

import logging
from pathlib import Path
from typing import Literal

import numpy as np

from pixlab.nn import Dataset, DatasetFormatError

logger = logging.getLogger(__name__)

IMAGE_SHAPE = (3, 32, 32)
RECORD_BYTES = 1 + 3 * 32 * 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)


def _read_batch(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DatasetFormatError(
            f"{path}: {raw.size} bytes is not a whole number of {RECORD_BYTES}-byte records"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise DatasetFormatError(f"{path}: label {labels.max()} outside 0..9")
    images = records[:, 1:].reshape(-1, *IMAGE_SHAPE).astype(np.float32) / 255.0
    return images, labels


def load_cifar10(
    directory,
    split: Literal["train", "test"] = "train",
    limit: int | None = None,
) -> Dataset:
    """Reads the batch files present for `split`, in file order, up to `limit` images."""
    directory = Path(directory)
    names = TRAIN_FILES if split == "train" else TEST_FILES
    paths = [directory / name for name in names if (directory / name).is_file()]
    if not paths:
        raise DatasetFormatError(
            f"no CIFAR-10 {split} batches in {directory}; expected: {', '.join(names)}"
        )

    images, labels = [], []
    total = 0
    for path in paths:
        batch_images, batch_labels = _read_batch(path)
        images.append(batch_images)
        labels.append(batch_labels)
        total += len(batch_labels)
        logger.debug("read %d records from %s", len(batch_labels), path.name)
        if limit is not None and total >= limit:
            break

    dataset = Dataset(np.concatenate(images), np.concatenate(labels)).take(limit)
    logger.info("Loaded %d CIFAR-10 %s images from %s", len(dataset), split, directory)
    return dataset
