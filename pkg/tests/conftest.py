import numpy as np
import pytest

from kspl import parallel
from kspl.nn import FlatParams, NetworkArchitecture, loss_and_grad


@pytest.fixture(autouse=True)
def _single_thread():
    parallel.set_threads(1)
    yield
    parallel.set_threads(1)


def hidden_preactivations(params, X):
    pre = []
    h = X
    layers = params.layers()
    for W, b in layers[:-1]:
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
    return pre


def random_instance(rng, max_depth=4, max_width=20, max_d=10, margin=1e-3):
    """Random (params, X, y) with every hidden pre-activation at least ``margin`` from 0."""
    while True:
        depth = int(rng.integers(2, max_depth + 1))
        d = int(rng.integers(1, max_d + 1))
        sizes = [d] + [int(rng.integers(1, max_width + 1)) for _ in range(depth - 1)] + [1]
        arch = NetworkArchitecture(tuple(sizes))
        # fan-scaled weights with random biases keep the loss O(1), so central
        # differences are not swamped by cancellation
        params = FlatParams(np.zeros(arch.n_params), arch)
        for (W, b), fan_in, fan_out in zip(params.layers(), sizes[:-1], sizes[1:]):
            W[:] = rng.uniform(-1, 1, size=W.shape) * np.sqrt(6.0 / (fan_in + fan_out))
            b[:] = rng.normal(scale=0.5, size=b.shape)
        m = int(rng.integers(1, 9))
        X = rng.normal(size=(m, d))
        y = rng.normal(size=m)
        if all(np.all(np.abs(z) >= margin) for z in hidden_preactivations(params, X)):
            return params, X, y


def fd_relative_errors(params, X, y, h=1e-5, floor=1e-3):
    """Componentwise |g - fd| / max(|g|, |fd|, floor) for central differences."""
    _, g = loss_and_grad(params, X, y)
    fd = np.empty_like(g)
    for i in range(g.size):
        tp = params.theta.copy()
        tm = params.theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, _ = loss_and_grad(FlatParams(tp, params.architecture), X, y)
        lm, _ = loss_and_grad(FlatParams(tm, params.architecture), X, y)
        fd[i] = (lp - lm) / (2 * h)
    return np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
