"""Counter-addressed random sources.

A :class:`RandomStream` is the triple (seed, stream_id, counter). The counter
indexes 64-bit Philox output words; each uniform or normal variate consumes
exactly one word, so the k-th variate of a stream is a pure function of
(seed, stream_id, counter + k). Normals use the inverse normal CDF
(``scipy.special.ndtri``, a piecewise rational approximation) on an open
uniform, one word per variate.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from kspl import _backend
from kspl.errors import ConfigError

MASK64 = (1 << 64) - 1


def mix64(*values):
    """SplitMix64-style hash of a sequence of integers (or short strings)."""
    h = 0x243F6A8885A308D3
    for v in values:
        if isinstance(v, str):
            v = int.from_bytes(v.encode(), "little")
        h = (h ^ (int(v) & MASK64)) & MASK64
        h = (h + 0x9E3779B97F4A7C15) & MASK64
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        h = z ^ (z >> 31)
    return h


@dataclass
class RandomStream:
    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64
        self.counter = int(self.counter) & MASK64

    def child(self, *labels):
        """A fresh stream (counter 0) whose id is derived from this one and ``labels``."""
        return RandomStream(self.seed, mix64(self.stream_id, *labels), 0)

    def at(self, counter):
        return replace(self, counter=counter)

    def uniform(self, size):
        """Open-interval uniforms on (0, 1); advances the counter."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        out = _backend.uniforms(self.seed, self.stream_id, self.counter, n)
        self.counter = (self.counter + n) & MASK64
        return out.reshape(shape)

    def normal(self, size):
        return ndtri(self.uniform(size))

    def integers(self, high, size):
        """Integers in [0, high) via floor of uniforms (bias below 2**-40 for high < 2**13)."""
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)


@dataclass(frozen=True)
class CubeDomain:
    a: float
    b: float
    d: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigError(f"cube needs b > a, got [{self.a}, {self.b}]")
        if self.d < 1:
            raise ConfigError(f"cube dimension must be >= 1, got {self.d}")

    def inflate(self, margin):
        return CubeDomain(self.a - margin, self.b + margin, self.d)

    @property
    def volume(self):
        return (self.b - self.a) ** self.d


def sample_normal(stream, d, n=None):
    """``d`` standard normals (or an ``(n, d)`` array of them)."""
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return stream.normal(d if n is None else (n, d))


def sample_uniform_cube(stream, dom, n=None):
    """Uniform point(s) in ``[a, b]^d``."""
    u = stream.uniform(dom.d if n is None else (n, dom.d))
    return np.clip(dom.a + (dom.b - dom.a) * u, dom.a, dom.b)
