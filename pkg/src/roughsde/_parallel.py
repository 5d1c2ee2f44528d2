"""Deterministic thread-pool map, capped by ``ROUGH_SDE_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "ROUGH_SDE_THREADS"


def worker_count() -> int:
    raw = os.environ.get(ENV_THREADS)
    default = min(8, os.cpu_count() or 1)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, possibly threaded; output order is input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
