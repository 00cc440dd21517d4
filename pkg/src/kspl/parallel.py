"""Fixed-partition thread parallelism.

Work is always cut into the same chunks regardless of the worker count and
results are returned in chunk order, so reductions over them do not depend on
how many threads ran.
"""
from concurrent.futures import ThreadPoolExecutor

_threads = 1

#: Default chunk length for Monte Carlo sample loops. Part of the reproducibility
#: contract: changing it changes floating-point summation order.
CHUNK = 1 << 16


def set_threads(n):
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads():
    return _threads


def chunk_bounds(n, chunk=CHUNK):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(fn, n, chunk=CHUNK):
    """Apply ``fn(lo, hi)`` over fixed chunks of ``range(n)``; results in order."""
    bounds = chunk_bounds(n, chunk)
    if _threads == 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
