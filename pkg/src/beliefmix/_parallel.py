"""Deterministic fan-out over independent work items.

Results are returned in submission order no matter how the pool schedules
the work, so any reduction downstream is reproducible.  BELIEFMIX_THREADS
caps the pool size (default: hardware count); the BP kernels release the
GIL, so threads give real overlap.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["thread_count", "thread_map"]


def thread_count():
    env = os.environ.get("BELIEFMIX_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def thread_map(fn, items, threads=None):
    """Apply fn to each item, returning results in item order."""
    items = list(items)
    n = threads if threads is not None else thread_count()
    n = min(max(1, n), len(items)) if items else 1
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
