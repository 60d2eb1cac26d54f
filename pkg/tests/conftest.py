"""
Pytest fixtures for pixlab tests.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pytest

from pixlab.tensor import make_rng
from pixlab.utils.loader import RECORD_BYTES


def _test_description(item: pytest.Item) -> str:
    """Human-readable test description from docstring or function name."""
    obj = getattr(item, "obj", None)
    doc: Optional[str] = getattr(obj, "__doc__", None) if obj else None
    if doc:
        first_line = doc.strip().splitlines()[0].strip()
        if first_line:
            return first_line
    return item.name.replace("_", " ")


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item: pytest.Item) -> None:
    """Print what each test validates before execution."""
    tr = item.config.pluginmanager.getplugin("terminalreporter")
    if tr is None:
        return
    tr.write_line(f"[CHECK] {item.nodeid} -> {_test_description(item)}")


@pytest.fixture(autouse=True)
def _restore_root_logging():
    """CLI runs reconfigure the root logger onto streams that close after the run."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng():
    """Seeded generator shared by a single test."""
    return make_rng(1234)


def _write_cifar_batch(path: Path, labels, pixels: np.ndarray) -> Path:
    """Writes CIFAR-10 binary records: label byte + 3072 channel-major pixel bytes."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), RECORD_BYTES - 1)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], pixels], axis=1)
    path.write_bytes(records.tobytes())
    return path


@pytest.fixture
def write_cifar_batch():
    return _write_cifar_batch


@pytest.fixture
def cifar_dir(tmp_path):
    """Synthetic CIFAR-10 directory: 40 train and 20 test records with random pixels."""
    generator = make_rng(7)
    _write_cifar_batch(
        tmp_path / "data_batch_1.bin",
        np.arange(40) % 10,
        generator.integers(0, 256, size=(40, RECORD_BYTES - 1)),
    )
    _write_cifar_batch(
        tmp_path / "test_batch.bin",
        np.arange(20) % 10,
        generator.integers(0, 256, size=(20, RECORD_BYTES - 1)),
    )
    return tmp_path
