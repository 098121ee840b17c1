"""Small shared helpers: bounded deterministic parallel mapping."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_DEFAULT_THREADS: int | None = None


def default_threads() -> int:
    if _DEFAULT_THREADS is not None:
        return _DEFAULT_THREADS
    env = os.environ.get("COMBPREP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def set_default_threads(n: int | None):
    global _DEFAULT_THREADS
    _DEFAULT_THREADS = None if n is None else max(1, int(n))


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Map with a bounded thread pool; results keep the input order, so the
    reduction is deterministic for any worker count."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
