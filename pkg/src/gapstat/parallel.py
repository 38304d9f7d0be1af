"""Deterministic sharding of stochastic work.

Work is cut into a fixed number of shards, each with its own child seed
spawned from the master seed.  Threads only decide which shard runs when,
so results depend on (inputs, seed, shards) and never on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_SHARDS = 8
THREADS_ENV = "GAPSTAT_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def shard_rngs(seed: int, shards: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(shards)]


def split_counts(total: int, shards: int) -> list[int]:
    base, extra = divmod(total, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def run_ordered(fn: Callable[..., T], jobs: Sequence[tuple], threads: int | None = None) -> list[T]:
    """Apply ``fn(*job)`` to every job and return results in job order."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
