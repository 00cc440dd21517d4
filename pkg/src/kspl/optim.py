"""Plain SGD and Adam over flat parameter vectors."""
from dataclasses import dataclass, field

import numpy as np

from kspl.errors import ConfigError, NumericalGuardError
from kspl.nn import FlatParams


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    step_size: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # piecewise-constant multipliers: ((start_step, factor), ...), sorted by start
    decay: tuple = ()

    def __post_init__(self):
        if self.kind not in ("plain-sgd", "adam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if not self.step_size > 0:
            raise ConfigError("step_size must be > 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError("adam_epsilon must be > 0")
        decay = tuple((int(s), float(f)) for s, f in self.decay)
        if any(b[0] < a[0] for a, b in zip(decay, decay[1:])):
            raise ConfigError("decay schedule must be sorted by step")
        object.__setattr__(self, "decay", decay)

    def rate_at(self, step_index):
        factor = 1.0
        for start, f in self.decay:
            if step_index >= start:
                factor = f
        return self.step_size * factor


def default_optimizer(total_steps):
    """Adam at 1e-3, dropped x0.1 at 60% and again at 85% of the budget."""
    return OptimizerConfig(
        decay=((int(0.6 * total_steps), 0.1), (int(0.85 * total_steps), 0.01)))


@dataclass
class OptimizerState:
    step_index: int = 0
    first_moment: np.ndarray = field(default=None)
    second_moment: np.ndarray = field(default=None)

    @classmethod
    def fresh(cls, config, n):
        if config.kind == "adam":
            return cls(0, np.zeros(n), np.zeros(n))
        return cls(0)


def step(params, grad, state, config):
    """One optimizer update; returns new ``(params, state)`` and leaves inputs intact."""
    grad = np.asarray(grad, dtype=np.float64)
    theta = params.theta
    if grad.shape != theta.shape:
        raise ConfigError(f"gradient shape {grad.shape} != parameter shape {theta.shape}")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericalGuardError(
            f"non-finite gradient at index {int(bad[0])} (value {grad[bad[0]]!r})")
    eta = config.rate_at(state.step_index)
    t = state.step_index + 1

    if config.kind == "plain-sgd":
        return FlatParams(theta - eta * grad, params.architecture), OptimizerState(t)

    if state.first_moment is None or state.first_moment.shape != theta.shape:
        raise ConfigError("adam state does not match the parameter vector")
    b1, b2 = config.adam_beta1, config.adam_beta2
    m = b1 * state.first_moment + (1.0 - b1) * grad
    v = b2 * state.second_moment + (1.0 - b2) * (grad * grad)
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = theta - eta * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return FlatParams(new, params.architecture), OptimizerState(t, m, v)
