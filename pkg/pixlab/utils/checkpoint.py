import logging
import shutil
from pathlib import Path

import numpy as np

from pixlab.tensor import Tensor, read_pxt, write_pxt

logger = logging.getLogger(__name__)

CHECKPOINT_PREFIX = "epoch_"


def _as_rank4(array: np.ndarray) -> np.ndarray:
    return array.reshape((1,) * (4 - array.ndim) + array.shape)


def save_checkpoint(model, directory, epoch: int, keep: int = 2) -> Path:
    """
    Dumps every model parameter as a PXT1 file under epoch_XXX/ and
    removes old checkpoints, keeping only the newest `keep`.
    """
    directory = Path(directory)
    target = directory / f"{CHECKPOINT_PREFIX}{epoch:03d}"
    target.mkdir(parents=True, exist_ok=True)

    for name, value in model.named_parameters():
        write_pxt(Tensor(_as_rank4(value).astype(np.float32)), target / f"{name}.pxt")

    logger.info("Checkpoint saved: %s", target)
    clean_old_checkpoints(directory, keep=keep)
    return target


def clean_old_checkpoints(directory, keep: int) -> list[Path]:
    """
    Removes old checkpoint folders, leaving the `keep` newest ones.
    """
    directory = Path(directory)
    folders = sorted(p for p in directory.glob(f"{CHECKPOINT_PREFIX}*") if p.is_dir())

    # Zero-padded epoch numbers sort chronologically
    if len(folders) <= keep:
        return []

    removed = folders[:-keep] if keep > 0 else folders
    for folder in removed:
        shutil.rmtree(folder)
        logger.info("Removed old checkpoint: %s", folder.name)
    return removed


def load_checkpoint(model, folder):
    """Restore parameters written by save_checkpoint into `model` in place."""
    folder = Path(folder)
    for name, value in model.named_parameters():
        path = folder / f"{name}.pxt"
        if not path.exists():
            raise FileNotFoundError(f"checkpoint {folder} has no file for parameter {name}")
        stored = read_pxt(path).data
        if stored.size != value.size:
            raise ValueError(f"{path}: holds {stored.size} values, parameter {name} needs {value.size}")
        value[...] = stored.reshape(value.shape).astype(value.dtype)
    return model
