import math

import numpy as np
import pytest

from kspl.errors import BudgetExceededError, ConfigError
from kspl.kolmogorov import TrainingPlan, train
from kspl.optim import OptimizerConfig
from kspl.problems import semilinear_problem
from kspl.splitting import (SplittingState, frozen_target, solve, split_step_mc,
                            split_step_train, training_cube)


def fast_plan(sizes, steps=1000, seed=0):
    opt = OptimizerConfig(step_size=1e-2, decay=((int(0.6 * steps), 0.1), (int(0.85 * steps), 0.01)))
    return TrainingPlan(sizes, batch_size=64, total_steps=steps, optimizer=opt, seed=seed,
                        eval_every=steps)


def test_frozen_target_examples():
    p = semilinear_problem(2, 1.0, "sqnorm", "zero")
    st = SplittingState(p, 4)
    y = np.array([[0.5, 1.0], [2.0, 0.0]])
    np.testing.assert_array_equal(frozen_target(st, y), p.phi(y))
    q = semilinear_problem(1, 1.0, "constant", "linear", {"c": 3.0}, {"lam": 1.0})
    st = SplittingState(q, 10)
    assert frozen_target(st, np.array([0.7])) == pytest.approx(3.3)


def test_state_geometry():
    p = semilinear_problem(2, 0.5, "sqnorm", "zero")
    st = SplittingState(p, 5)
    assert st.h == pytest.approx(0.1)
    assert st.sigma == pytest.approx(math.sqrt(0.2))
    assert st.tau(3) == pytest.approx(0.3)
    cube = training_cube(st, 3.0)
    assert cube.a == pytest.approx(-3.0 * math.sqrt(0.2) * math.sqrt(5))
    with pytest.raises(ConfigError):
        SplittingState(p, 0)


def test_mc_constant_recursion_exact():
    p = semilinear_problem(3, 1.0, "constant", "linear", {"c": 1.0}, {"lam": 1.0})
    st = SplittingState(p, 10)
    x = np.array([[0.1, 0.2, 0.3]])
    for n in range(10):
        v, ci = split_step_mc(st, 3, x, seed=5)
        assert v[0] == pytest.approx(1.1 ** (n + 1), rel=1e-14)
        assert ci[0] == 0.0
    assert st.n == 10
    with pytest.raises(ConfigError):
        split_step_mc(st, 3, x)


def test_mc_constant_preserved_without_f():
    p = semilinear_problem(2, 1.0, "constant", "zero", {"c": -0.25})
    res = solve(p, 6, mode="mc", inner=2, seed=1)
    v, ci = res.evaluator.evaluate(np.array([[0.0, 0.0], [5.0, -1.0]]))
    np.testing.assert_array_equal(v, -0.25)


def test_mc_linear_martingale():
    p = semilinear_problem(2, 1.0, "linear", "zero", {"c": [1.0, 2.0]})
    st = SplittingState(p, 4)
    x = np.array([[0.3, 0.6], [1.0, -1.0]])
    split_step_mc(st, 1, seed=2)
    v, ci = split_step_mc(st, 40_000, x, seed=2)
    assert np.all(np.abs(v - p.phi(x)) <= ci)


def test_mc_ci_scaling():
    p = semilinear_problem(2, 0.5, "sqnorm", "sine")
    x = np.array([[0.5, 0.5]])
    _, c1 = solve(p, 2, mode="mc", inner=[1, 20_000], seed=3).evaluator.evaluate(x)
    _, c4 = solve(p, 2, mode="mc", inner=[1, 80_000], seed=4).evaluator.evaluate(x)
    assert c4[0] / c1[0] == pytest.approx(0.5, rel=0.2)


def test_mc_budget_guard():
    p = semilinear_problem(1, 1.0, "sqnorm", "linear")
    with pytest.raises(BudgetExceededError):
        solve(p, 4, mode="mc", inner=[100, 100, 100, 100], budget_cap=10**6)
    res = solve(p, 2, mode="mc", inner=[10, 10], budget_cap=1000)
    with pytest.raises(BudgetExceededError):
        res.evaluator.evaluate(np.zeros((20, 1)), budget_cap=1000)


def test_mc_deterministic_and_thread_invariant():
    from kspl import parallel
    p = semilinear_problem(2, 0.5, "sqnorm", "cubic_clipped")
    X = np.array([[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]])
    a = solve(p, 3, mode="mc", inner=[2, 3, 40_000], seed=9).evaluator.evaluate(X)
    parallel.set_threads(3)
    b = solve(p, 3, mode="mc", inner=[2, 3, 40_000], seed=9).evaluator.evaluate(X)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_single_step_reduces_to_kolmogorov_training():
    p = semilinear_problem(2, 0.5, "sqnorm", "zero")
    plan = fast_plan((2, 8, 8, 1), steps=200, seed=17)
    res = solve(p, 1, plan, "nn", inflation=0.0)
    ref = train(p.base, plan)
    assert res.evaluator.params.theta.tobytes() == ref.params.theta.tobytes()
    assert res.evaluator.log == ref.log


def test_nn_constant_without_f():
    p = semilinear_problem(2, 1.0, "constant", "zero", {"c": 1.5})
    st = SplittingState(p, 3)
    X = np.random.default_rng(0).uniform(size=(200, 2))
    for _ in range(3):
        split_step_train(st, fast_plan((2, 8, 1), steps=3000), inflation=1.0)
        assert np.max(np.abs(st.values[-1](X) - 1.5)) < 0.01


def test_nn_constant_linear_growth():
    p = semilinear_problem(1, 1.0, "constant", "linear", {"c": 1.0}, {"lam": 1.0})
    res = solve(p, 10, fast_plan((1, 8, 1), steps=1500), "nn", inflation=1.0)
    X = np.linspace(0.0, 1.0, 21)[:, None]
    assert np.max(np.abs(res(X) - 1.1 ** 10)) < 0.02
    assert abs(1.1 ** 10 - math.e) == pytest.approx(0.1245, abs=1e-4)


def test_nn_sequential_determinism():
    p = semilinear_problem(1, 0.5, "sqnorm", "sine")
    plan = fast_plan((1, 6, 1), steps=100, seed=2)
    a = solve(p, 3, plan, "nn")
    b = solve(p, 3, plan, "nn")
    for u, v in zip(a.state.values[1:], b.state.values[1:]):
        assert u.params.theta.tobytes() == v.params.theta.tobytes()
    assert [r["seed"] for r in a.provenance] == [r["seed"] for r in b.provenance]
    assert len(set(r["seed"] for r in a.provenance)) == 3


def test_fit_initial_toggle():
    p = semilinear_problem(1, 0.5, "sqnorm", "zero")
    res = solve(p, 2, fast_plan((1, 10, 1), steps=300), "nn", fit_initial=True)
    assert res.provenance[0]["kind"] == "initial-fit"
    assert res.state.values[0] is not p.phi


def test_bad_mode_and_inner_length():
    p = semilinear_problem(1, 0.5, "sqnorm", "zero")
    with pytest.raises(ConfigError):
        solve(p, 2, mode="exact")
    with pytest.raises(ConfigError):
        solve(p, 2, mode="mc", inner=[1, 2, 3])
    with pytest.raises(ConfigError):
        solve(p, 2, mode="nn")
