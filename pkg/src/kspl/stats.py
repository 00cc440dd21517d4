"""Chunk-wise mean / variance accumulation with a fixed reduction order."""
import math

import numpy as np

from kspl import parallel

Z95 = 1.959963984540054


def _moments(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    mean = float(np.mean(x)) if n else 0.0
    m2 = float(np.sum((x - mean) ** 2)) if n else 0.0
    return n, mean, m2


def combine(parts):
    """Merge ``(n, mean, m2)`` triples left to right (Chan et al.)."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def chunked_mean(sample_fn, n, chunk=parallel.CHUNK):
    """Mean and 95% normal half-width of ``n`` samples produced chunkwise.

    ``sample_fn(lo, hi)`` must return the samples with global indices
    ``lo..hi-1`` and depend on nothing else, so the result is independent of
    the worker count.
    """
    parts = parallel.map_chunks(lambda lo, hi: _moments(sample_fn(lo, hi)), n, chunk)
    n, mean, m2 = combine(parts)
    var = m2 / (n - 1) if n > 1 else float("nan")
    return mean, Z95 * math.sqrt(var / n), var


def mean_ci(x):
    n, mean, m2 = _moments(x)
    var = m2 / (n - 1) if n > 1 else float("nan")
    return mean, Z95 * math.sqrt(var / n)
