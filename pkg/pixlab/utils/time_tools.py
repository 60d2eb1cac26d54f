import time

import numpy as np


def time_call(fn, reps: int) -> np.ndarray:
    """
    Runs `fn()` `reps` times and returns the wall-clock seconds of each run.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    samples = np.empty(reps)
    for i in range(reps):
        start = time.perf_counter()
        fn()
        samples[i] = time.perf_counter() - start
    return samples


def format_seconds(seconds: float) -> str:
    """0.000123 -> '123.0 us', 0.5 -> '500.0 ms', 2 -> '2.00 s'."""
    if seconds < 1e-3:
        return f"{seconds * 1e6:.1f} us"
    if seconds < 1:
        return f"{seconds * 1e3:.1f} ms"
    return f"{seconds:.2f} s"
