"""Fully connected ReLU networks stored as one flat parameter vector.

Layout of ``theta`` (0-based): layer ``i`` (1..L) occupies the block
``theta[off[i-1]:off[i]]``. Inside a block the ``l_i x l_{i-1}`` weight matrix
comes first in row-major order, so weight (r, c) (1-based) sits at
``off[i-1] + (r-1)*l_{i-1} + (c-1)``, followed by the ``l_i`` biases.
Hidden layers are rectified; the output layer is affine.
"""
from dataclasses import dataclass, field

import numpy as np

from kspl.errors import ConfigError, NumericalGuardError


def _check_sizes(layer_sizes, min_depth):
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) - 1 < min_depth:
        raise ConfigError(
            f"network depth L={len(sizes) - 1} below minimum {min_depth}: {sizes}")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 1: {sizes}")
    return sizes


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer sizes ``(l_0, ..., l_L)`` with ``L >= 2``."""

    layer_sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", _check_sizes(self.layer_sizes, 2))

    @property
    def depth(self):
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def offsets(self):
        return param_offsets(self)

    @property
    def n_params(self):
        return param_count(self)


def _sizes_of(arch):
    if isinstance(arch, NetworkArchitecture):
        return arch.layer_sizes
    # bare size sequences follow the parameter-count operator, which allows L = 1
    return _check_sizes(arch, 1)


def param_offsets(arch):
    """Cumulative block offsets ``(d_1, ..., d_{L+1})``; ``d_1 = 0``."""
    sizes = _sizes_of(arch)
    offs = [0]
    for k in range(1, len(sizes)):
        offs.append(offs[-1] + sizes[k] * (sizes[k - 1] + 1))
    return tuple(offs)


def param_count(arch):
    return param_offsets(arch)[-1]


@dataclass
class FlatParams:
    theta: np.ndarray
    architecture: NetworkArchitecture

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        n = self.architecture.n_params
        if self.theta.shape != (n,):
            raise ConfigError(
                f"theta has shape {self.theta.shape}, architecture needs ({n},)")

    def layers(self):
        """Per-layer ``(W, b)`` views into ``theta``."""
        sizes = self.architecture.layer_sizes
        offs = self.architecture.offsets
        out = []
        for i in range(1, len(sizes)):
            o, m, n = offs[i - 1], sizes[i], sizes[i - 1]
            W = self.theta[o:o + m * n].reshape(m, n)
            b = self.theta[o + m * n:o + m * n + m]
            out.append((W, b))
        return out

    def copy(self):
        return FlatParams(self.theta.copy(), self.architecture)


def init_params(arch, stream):
    """Uniform fan-based weights on +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    theta = np.zeros(arch.n_params)
    sizes, offs = arch.layer_sizes, arch.offsets
    for i in range(1, len(sizes)):
        m, n = sizes[i], sizes[i - 1]
        lim = np.sqrt(6.0 / (n + m))
        theta[offs[i - 1]:offs[i - 1] + m * n] = lim * (2.0 * stream.uniform(m * n) - 1.0)
    return FlatParams(theta, arch)


def forward_batch(params, X):
    """Evaluate the network on the rows of ``X`` (shape ``(m, l_0)``)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.architecture.input_dim:
        raise ConfigError(
            f"input shape {X.shape} does not match l_0={params.architecture.input_dim}")
    layers = params.layers()
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W.T + b, 0.0)
    W, b = layers[-1]
    return h @ W.T + b


def forward(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError(f"forward expects a vector, got shape {x.shape}")
    return forward_batch(params, x[None, :])[0]


def loss_and_grad(params, X, y):
    """Mean squared error over the batch and its exact gradient in ``theta``.

    The ReLU derivative at 0 is taken as 0.
    """
    arch = params.architecture
    if arch.output_dim != 1:
        raise ConfigError("loss_and_grad needs a scalar-output network")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ConfigError(f"batch inputs have shape {X.shape}, expected (m, {arch.input_dim})")
    m = X.shape[0]
    if m == 0:
        raise ConfigError("empty batch")
    if y.shape[0] != m:
        raise ConfigError(f"{m} inputs but {y.shape[0]} targets")

    layers = params.layers()
    acts = [X]
    pre = []
    h = X
    for W, b in layers[:-1]:
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    W, b = layers[-1]
    out = (h @ W.T + b)[:, 0]
    resid = out - y
    loss = float(np.mean(resid * resid))

    grad = np.empty_like(params.theta)
    gl = [(gW, gb) for gW, gb in FlatParams(grad, arch).layers()]
    delta = (2.0 / m) * resid[:, None]
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = gl[i]
        gW[...] = delta.T @ acts[i]
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i][0]) * (pre[i - 1] > 0.0)
    return loss, grad


@dataclass
class Realization:
    """The input-output map of a parameter vector."""

    params: FlatParams
    input_dim: int = field(init=False)
    output_dim: int = field(init=False)

    def __post_init__(self):
        self.input_dim = self.params.architecture.input_dim
        self.output_dim = self.params.architecture.output_dim

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return forward(self.params, x)
        return forward_batch(self.params, x)


def realization(params):
    return Realization(params)


class ScalarNet:
    """Batch evaluator ``(m, d) -> (m,)`` for scalar-output networks."""

    def __init__(self, params):
        if params.architecture.output_dim != 1:
            raise ConfigError("ScalarNet needs a scalar-output network")
        self.params = params
        self.d = params.architecture.input_dim

    def __call__(self, X):
        return forward_batch(self.params, X)[:, 0]


def check_finite(theta, what="parameters"):
    bad = np.flatnonzero(~np.isfinite(theta))
    if bad.size:
        raise NumericalGuardError(
            f"non-finite {what} at index {int(bad[0])} (value {theta[bad[0]]!r})")
