"""Small shared helpers: bounded thread pool and eigenvalue clustering."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_limit() -> int:
    """Parallelism cap from AUTOCLOCK_THREADS (default 1, i.e. sequential)."""
    raw = os.environ.get("AUTOCLOCK_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def ordered_map(fn, items):
    """Map preserving input order; runs on a thread pool when allowed.

    Results are collected in input order, so reductions over them are
    deterministic regardless of the worker count.
    """
    items = list(items)
    workers = thread_limit()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def cluster_indices(values: np.ndarray, tol: float = 1e-8):
    """Group indices of a sorted-ascending array into near-degenerate runs."""
    values = np.asarray(values, dtype=float)
    groups = []
    current = [0]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] <= tol:
            current.append(i)
        else:
            groups.append(np.array(current))
            current = [i]
    groups.append(np.array(current))
    return groups
