"""Order-preserving worker pool capped by ``MRSLE_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def workers() -> int:
    raw = os.environ.get("MRSLE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def pmap(fn, items, n_workers: int | None = None, chunksize: int = 16) -> list:
    """``[fn(x) for x in items]``, optionally spread over processes.

    Results come back in input order, so any reduction over them is
    independent of the worker count.
    """
    items = list(items)
    n_workers = workers() if n_workers is None else n_workers
    if n_workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
