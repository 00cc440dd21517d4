import math

import numpy as np
import pytest

from kspl.errors import ConfigError, NumericalGuardError
from kspl.kolmogorov import TrainingPlan, fit, loss_of, make_regression_sample, train
from kspl.metrics import l2_error
from kspl.nn import NetworkArchitecture
from kspl.optim import OptimizerConfig
from kspl.oracles import closed_form
from kspl.problems import heat_problem
from kspl.sampling import RandomStream


class FixedStream:
    """Stand-in stream returning preset values (for hand-computed examples)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def uniform(self, size):
        return self.values.reshape(size)

    def normal(self, size):
        return self.values.reshape(size)


def test_regression_sample_hand_example():
    p = heat_problem(1, 0.5, "linear", {"c": 1.0})
    xi, y = make_regression_sample(p, FixedStream([0.3]), FixedStream([1.0]))
    assert xi[0] == pytest.approx(0.3)
    assert y == pytest.approx(1.3)


def test_regression_sample_constant():
    p = heat_problem(4, 2.0, "constant", {"c": -1.5})
    _, y = make_regression_sample(p, RandomStream(1), RandomStream(2), 100)
    assert np.all(y == -1.5)


def test_small_time_limit():
    p = heat_problem(2, 1e-12, "sqnorm")
    xi, y = make_regression_sample(p, RandomStream(1), RandomStream(2), 50)
    np.testing.assert_allclose(y, np.sum(xi ** 2, axis=1), atol=1e-4)


def test_feynman_kac_target_mean():
    p = heat_problem(3, 0.5, "sqnorm")
    x = np.array([0.2, 0.4, 0.9])
    W = RandomStream(5).normal((200_000, 3))
    y = p.phi(x + p.varrho * W)
    ci = 1.96 * y.std() / math.sqrt(y.size)
    assert abs(y.mean() - closed_form(p)(0.5, x[None])[0]) <= ci


@pytest.mark.filterwarnings("ignore:overflow")
def test_nonfinite_target_guard():
    p = heat_problem(1, 1.0, "exp_inner", {"c": 1000.0}, a=0.0, b=1.0)
    with pytest.raises(NumericalGuardError, match="non-finite target"):
        make_regression_sample(p, RandomStream(1), RandomStream(2), 64)


def test_plan_checks():
    with pytest.raises(ConfigError):
        TrainingPlan(NetworkArchitecture((2, 5, 2)))
    plan = TrainingPlan.default(3)
    assert plan.architecture.layer_sizes == (3, 50, 50, 1)
    assert (plan.batch_size, plan.total_steps) == (256, 20_000)
    with pytest.raises(ConfigError):
        plan.check(4)


def test_train_constant_and_deterministic():
    p = heat_problem(2, 0.5, "constant", {"c": 2.0})
    opt = OptimizerConfig(step_size=1e-2, decay=((900, 0.1), (1300, 0.01)))
    plan = TrainingPlan((2, 10, 1), batch_size=64, total_steps=1500, optimizer=opt, seed=4,
                        eval_every=500)
    a = train(p, plan)
    b = train(p, plan)
    assert a.params.theta.tobytes() == b.params.theta.tobytes()
    assert a.log == b.log
    assert [row[0] for row in a.log] == [500, 1000, 1500]
    X = RandomStream(8).uniform((100, 2))
    assert np.max(np.abs(a(X) - 2.0)) < 0.01


def test_train_linear_phi():
    p = heat_problem(2, 1.0, "linear", {"c": [1.0, -2.0]})
    plan = TrainingPlan((2, 20, 20, 1), batch_size=128, total_steps=3000, seed=1)
    sur = train(p, plan)
    exact = closed_form(p)
    rep = l2_error(sur, lambda X: exact(1.0, X), p.domain, 20_000, RandomStream(2))
    assert rep.relative < 0.1


def test_divergence_guard():
    def sampler(k):
        X = np.ones((4, 1))
        return X, np.full(4, 10.0 ** min(k, 300))

    plan = TrainingPlan((1, 3, 1), batch_size=4, total_steps=400, seed=0)
    with pytest.raises(NumericalGuardError):
        fit(sampler, plan)


def test_loss_of_exact_constant_is_zero():
    p = heat_problem(3, 1.0, "constant", {"c": 0.7})
    est, ci = loss_of(lambda X: np.full(X.shape[0], 0.7), p, 1000, RandomStream(1))
    assert est == 0.0 and ci == 0.0


def test_loss_of_ci_scaling():
    p = heat_problem(2, 0.5, "sqnorm")
    cand = lambda X: np.sum(X, axis=1)
    _, c1 = loss_of(cand, p, 40_000, RandomStream(3))
    _, c4 = loss_of(cand, p, 160_000, RandomStream(4))
    assert c4 / c1 == pytest.approx(0.5, rel=0.2)


@pytest.mark.parametrize("phi, params", [("linear", {"c": 1.0}), ("sqnorm", {}),
                                         ("exp_inner", {"c": 0.5}), ("constant", {"c": 1.0})])
def test_optimality_gap_and_pythagoras(phi, params):
    p = heat_problem(2, 0.5, phi, params)
    exact = closed_form(p)
    U = lambda X: exact(p.T, X)
    v = lambda X: U(X) + 0.3 * np.sin(3 * X[:, 0])
    s = RandomStream(21)
    lv, cv = loss_of(v, p, 200_000, s)
    lu, cu = loss_of(U, p, 200_000, s)
    gap_ci = math.hypot(cv, cu)
    assert lv - lu >= -gap_ci
    xs = RandomStream(22).uniform((200_000, 2))
    sq = (U(xs) - v(xs)) ** 2
    sq_ci = 1.96 * sq.std() / math.sqrt(sq.size)
    assert abs((lv - lu) - sq.mean()) <= gap_ci + sq_ci
