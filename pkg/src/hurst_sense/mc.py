"""Monte Carlo bookkeeping: estimates with standard errors and batched runs.

Paths are processed in fixed-size batches whose boundaries depend only on
``n_paths``.  Worker threads pick batches but never change their contents,
and reductions run once over the concatenated per-path samples, so every
result is identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

BATCH_SIZE = 4096
THREADS_ENV = "HURST_SENSE_THREADS"


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "stderr", float(self.stderr))
        object.__setattr__(self, "n_paths", int(self.n_paths))
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")

    @classmethod
    def from_samples(cls, samples, seed: int) -> "MCEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        mean = float(np.sum(x) / n)
        sd = float(np.sqrt(np.sum((x - mean) ** 2) / (n - 1))) if n > 1 else 0.0
        return cls(mean, sd / np.sqrt(n), n, int(seed))

    def within(self, value: float, k: float = 3.0, extra: float = 0.0) -> bool:
        """True if ``value`` lies within k standard errors (plus ``extra``)."""
        return abs(self.mean - value) <= k * self.stderr + extra

    def __str__(self):
        return f"{self.mean:.6g} +/- {self.stderr:.2g} (n={self.n_paths})"


def joint_se(*estimates: MCEstimate) -> float:
    """Standard error of a difference of independent estimates."""
    return float(np.sqrt(sum(e.stderr ** 2 for e in estimates)))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def batches(n_paths: int, batch_size: int = BATCH_SIZE) -> list[np.ndarray]:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    return [np.arange(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]


def run_batches(fn: Callable[[np.ndarray], dict], n_paths: int,
                workers: int | None = None, batch_size: int = BATCH_SIZE) -> dict:
    """Apply ``fn(path_indices) -> {name: per-path array}`` and concatenate.

    Arrays are joined along axis 0 in path order regardless of which thread
    produced them.
    """
    chunks = batches(n_paths, batch_size)
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(chunks) == 1:
        parts = [fn(idx) for idx in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}

