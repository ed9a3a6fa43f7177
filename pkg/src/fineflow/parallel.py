"""Order-preserving map over independent work items."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["default_workers", "map_ordered"]


def default_workers() -> int:
    """Worker count from ``FINEFLOW_WORKERS``, else 1."""
    raw = os.environ.get("FINEFLOW_WORKERS", "").strip()
    if not raw:
        return 1
    value = int(raw)
    if value < 1:
        raise ValueError("FINEFLOW_WORKERS must be a positive integer")
    return value


def map_ordered(fn, items, workers: int = 1) -> list:
    """``[fn(item) for item in items]``, optionally spread over processes.

    Results come back in input order, so callers that combine them in that
    order get the same answer for every worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
