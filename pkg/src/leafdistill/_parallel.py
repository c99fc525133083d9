"""Optional thread parallelism, capped by the LEAFDISTILL_THREADS env var.

Callers must only submit tasks whose results are independent of schedule;
outputs are collected by index so ordering never depends on completion time.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def max_workers() -> int:
    raw = os.environ.get("LEAFDISTILL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """map() preserving input order, threaded when LEAFDISTILL_THREADS > 1."""
    workers = max_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
