"""Deep Kolmogorov regression for the linear heat equation.

u(T, .) on the cube is the L2 minimiser over functions v of
E|phi(sqrt(2 rho T) W + xi) - v(xi)|^2 with W standard normal and xi uniform
on the cube. A ReLU network is fitted to that objective with fresh batches
at every optimizer step.
"""
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from kspl.errors import ConfigError, NumericalGuardError
from kspl.nn import FlatParams, NetworkArchitecture, ScalarNet, init_params, loss_and_grad
from kspl.optim import OptimizerConfig, OptimizerState, default_optimizer, step
from kspl.sampling import RandomStream, sample_normal, sample_uniform_cube
from kspl.stats import Z95, chunked_mean

log = logging.getLogger(__name__)

GUARD_STEP = 100
GUARD_FACTOR = 1e6


@dataclass
class TrainingPlan:
    architecture: NetworkArchitecture
    batch_size: int = 256
    total_steps: int = 20_000
    optimizer: OptimizerConfig = None
    seed: int = 0
    eval_every: int = 500

    def __post_init__(self):
        if not isinstance(self.architecture, NetworkArchitecture):
            self.architecture = NetworkArchitecture(tuple(self.architecture))
        if self.batch_size < 1 or self.total_steps < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, total_steps and eval_every must be positive")
        if self.architecture.output_dim != 1:
            raise ConfigError("the regression network must have a scalar output")
        if self.optimizer is None:
            self.optimizer = default_optimizer(self.total_steps)

    @classmethod
    def default(cls, d, **kw):
        return cls(NetworkArchitecture((d, 50, 50, 1)), **kw)

    def check(self, d):
        if self.architecture.input_dim != d:
            raise ConfigError(
                f"network input dim {self.architecture.input_dim} != problem dimension {d}")


@dataclass
class TrainedSurrogate:
    params: FlatParams
    fingerprint: str
    log: list = field(default_factory=list)  # (step, running loss, ci)

    def __post_init__(self):
        self._net = ScalarNet(self.params)

    def __call__(self, X):
        return self._net(np.atleast_2d(X))


def _check_targets(y, inputs):
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise NumericalGuardError(
            f"non-finite target {y[bad[0]]!r} at input {inputs[bad[0]].tolist()}")


def make_regression_sample(problem, xi_stream, w_stream, n=None):
    """One pair ``(xi, phi(varrho W + xi))`` or, with ``n``, a batch of them."""
    xi = sample_uniform_cube(xi_stream, problem.domain, n)
    W = sample_normal(w_stream, problem.d, n)
    z = problem.varrho * W + xi
    y = problem.phi(np.atleast_2d(z))
    _check_targets(y, np.atleast_2d(z))
    return (xi, y) if n is not None else (xi, float(y[0]))


def fit(sampler, plan, params=None, fingerprint=""):
    """Minimise the batch mean squared error of ``sampler(step) -> (X, y)``.

    ``params`` warm-starts the run; otherwise weights are drawn from the plan
    seed. Returns a :class:`TrainedSurrogate`.
    """
    if params is None:
        params = init_params(plan.architecture, RandomStream(plan.seed).child("init"))
    else:
        params = params.copy()
    state = OptimizerState.fresh(plan.optimizer, params.architecture.n_params)
    window = deque(maxlen=GUARD_STEP)
    recent = []
    reference = None
    history = []
    for k in range(plan.total_steps):
        X, y = sampler(k)
        loss, grad = loss_and_grad(params, X, y)
        if not np.isfinite(loss):
            raise NumericalGuardError(f"non-finite training loss at step {k}")
        window.append(loss)
        recent.append(loss)
        running = sum(window) / len(window)
        if k + 1 == GUARD_STEP:
            reference = running
        elif reference is not None and running > GUARD_FACTOR * reference:
            raise NumericalGuardError(
                f"training diverged at step {k}: running loss {running:.6g} "
                f"exceeds {GUARD_FACTOR:g} x step-{GUARD_STEP} value {reference:.6g}")
        params, state = step(params, grad, state, plan.optimizer)
        if (k + 1) % plan.eval_every == 0 or k + 1 == plan.total_steps:
            r = np.asarray(recent)
            ci = Z95 * r.std(ddof=1) / np.sqrt(r.size) if r.size > 1 else 0.0
            history.append((k + 1, float(r.mean()), float(ci)))
            log.debug("step %d loss %.6g +- %.2g", k + 1, r.mean(), ci)
            recent = []
    return TrainedSurrogate(params, fingerprint, history)


def train(problem, plan):
    """Fit u(T, .) on the problem cube; deterministic given ``plan.seed``."""
    plan.check(problem.d)
    root = RandomStream(plan.seed)
    xi_stream, w_stream = root.child("xi"), root.child("W")

    def sampler(k):
        return make_regression_sample(problem, xi_stream, w_stream, plan.batch_size)

    return fit(sampler, plan, fingerprint=problem.fingerprint())


def loss_of(candidate, problem, n_samples, stream):
    """Monte Carlo value of the regression objective at ``candidate``.

    Returns ``(estimate, ci_halfwidth)``. Draws are addressed by sample index,
    so two calls with the same stream use common random numbers.
    """
    if n_samples < 2:
        raise ConfigError("loss_of needs n_samples >= 2")
    xi_s, w_s = stream.child("loss-xi"), stream.child("loss-W")
    d = problem.d

    def chunk(lo, hi):
        xi = sample_uniform_cube(xi_s.at(lo * d), problem.domain, hi - lo)
        W = sample_normal(w_s.at(lo * d), d, hi - lo)
        y = problem.phi(problem.varrho * W + xi)
        r = y - candidate(xi)
        return r * r

    mean, ci, _ = chunked_mean(chunk, n_samples)
    return mean, ci
