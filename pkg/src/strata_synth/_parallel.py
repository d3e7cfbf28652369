"""Order-preserving map over worker processes."""

import os
from concurrent.futures import ProcessPoolExecutor

THREADS_ENV = "STRATA_SYNTH_THREADS"


def worker_count(requested=None) -> int:
    """Resolve a worker count, capped by ``STRATA_SYNTH_THREADS`` when set."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


def map_ordered(fn, items, n_jobs=1):
    """``list(map(fn, items))``, fanned out to processes when ``n_jobs > 1``.

    Results come back in input order regardless of completion order.
    """
    items = list(items)
    n_jobs = worker_count(n_jobs)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(items))) as pool:
        return list(pool.map(fn, items))
