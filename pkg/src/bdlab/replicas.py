"""Deterministic per-replica random streams and an optional process pool."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def replica_rng(seed: int, replica_id: int) -> np.random.Generator:
    """Independent PCG64 stream derived from (seed, replica_id)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replica_id),)))


def thread_count(requested: int | None = None) -> int:
    env = os.environ.get("BDLAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = cap if requested is None else min(requested, cap)
    return max(1, n)


def map_replicas(func, arg_list, threads: int | None = None) -> list:
    """Apply ``func`` to each argument tuple, in order, possibly in parallel.

    Results do not depend on the number of workers because every replica owns
    its random stream.
    """
    arg_list = list(arg_list)
    n = min(thread_count(threads), len(arg_list))
    if n <= 1:
        return [func(*args) for args in arg_list]
    with ProcessPoolExecutor(max_workers=n) as pool:
        futs = [pool.submit(func, *args) for args in arg_list]
        return [f.result() for f in futs]
