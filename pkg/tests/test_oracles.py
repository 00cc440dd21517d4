import math

import numpy as np
import pytest

from kspl.errors import BudgetExceededError, ConfigError
from kspl.oracles import PicardConfig, closed_form, fk_mc, picard_mc
from kspl.problems import heat_problem, semilinear_problem
from kspl.sampling import RandomStream

LINEAR_CATALOG = [("constant", {"c": 1.5}), ("linear", {"c": 0.5}), ("sqnorm", {}),
                  ("exp_inner", {"c": 0.2})]


def partial_exp(K, t=1.0):
    return sum(t ** k / math.factorial(k) for k in range(K + 1))


def test_closed_form_examples():
    u = closed_form(heat_problem(10, 0.5, "sqnorm"))
    assert u(0.5, np.zeros(10))[0] == pytest.approx(10.0)
    u = closed_form(heat_problem(4, 2.0, "linear", {"c": 1.0}, rho=3.0))
    x = np.array([0.1, -0.4, 2.0, 0.3])
    assert u(2.0, x)[0] == pytest.approx(x.sum())
    u = closed_form(heat_problem(3, 1.0, "exp_inner", {"c": [1.0, 0.0, 0.0]}))
    assert u(1.0, np.zeros(3))[0] == pytest.approx(math.e)
    u = closed_form(semilinear_problem(5, 0.5, "sqnorm", "linear", f_params={"lam": 1.0}))
    assert u(0.5, np.zeros(5))[0] == pytest.approx(math.exp(0.5) * 5, rel=1e-12)
    assert u(0.5, np.zeros(5))[0] == pytest.approx(8.2436, abs=1e-4)


def test_closed_form_missing():
    assert closed_form(semilinear_problem(2, 1.0, "sqnorm", "sine")) is None
    expr = {"op": "coord", "index": 0}
    assert closed_form(heat_problem(1, 1.0, "expr", {"expr": expr})) is None


@pytest.mark.parametrize("phi, params", LINEAR_CATALOG)
@pytest.mark.parametrize("f, lam", [("zero", None), ("linear", 1.0), ("linear", -0.7)])
def test_closed_form_self_test(phi, params, f, lam):
    prob = semilinear_problem(3, 1.0, phi, f, params, None if lam is None else {"lam": lam})
    worst = closed_form(prob).self_test(RandomStream(4), n_probes=100)
    assert worst <= 1e-6


@pytest.mark.parametrize("rho", [0.5, 2.0])
def test_closed_form_self_test_with_rho(rho):
    prob = heat_problem(2, 1.0, "exp_inner", {"c": [0.3, -0.6]}, rho=rho)
    assert closed_form(prob).self_test(RandomStream(1)) <= 1e-6


def test_self_test_catches_wrong_solution():
    prob = heat_problem(2, 1.0, "sqnorm")
    sol = closed_form(prob)
    sol.evaluator = lambda t, X: np.einsum("ij,ij->i", X, X) + t  # missing the factor 2 d
    with pytest.raises(AssertionError):
        sol.self_test(RandomStream(0), n_probes=5)


def test_fk_examples():
    v, ci = fk_mc(heat_problem(4, 1.0, "constant", {"c": 3.0}), 1.0, np.ones(4), 1000,
                  RandomStream(0))
    assert v == 3.0 and ci == 0.0
    v, ci = fk_mc(heat_problem(10, 0.5, "sqnorm"), 0.5, np.zeros(10), 10**5, RandomStream(1))
    assert abs(v - 10.0) <= ci
    # Var |W|^2 = 2d and varrho^4 = 1, so the half-width is 1.96 sqrt(20 / 1e5) ~ 0.028
    assert 0.02 < ci < 0.06


def test_fk_ci_scaling():
    p = heat_problem(2, 1.0, "exp_inner", {"c": 0.5})
    _, c1 = fk_mc(p, 1.0, np.zeros(2), 50_000, RandomStream(2))
    _, c4 = fk_mc(p, 1.0, np.zeros(2), 200_000, RandomStream(3))
    assert c4 / c1 == pytest.approx(0.5, rel=0.2)


def test_picard_exponential_partial_sums():
    p = semilinear_problem(1, 1.0, "constant", "linear", {"c": 1.0}, {"lam": 1.0})
    errs = []
    for K in range(1, 9):
        v, ci = picard_mc(p, 1.0, np.zeros(1), PicardConfig(picard_iterations=K, replicates=8),
                          RandomStream(0))
        assert v == pytest.approx(partial_exp(K), rel=1e-13)
        assert ci == 0.0
        errs.append(abs(v - math.e))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert abs(errs[5] - (math.e - 2.7180555555555554)) < 1e-12


def test_picard_midpoint_quadrature_is_less_exact():
    p = semilinear_problem(1, 1.0, "constant", "linear", {"c": 1.0}, {"lam": 1.0})
    cfg = PicardConfig(picard_iterations=4, time_nodes=4, quadrature="midpoint", replicates=2)
    v, _ = picard_mc(p, 1.0, np.zeros(1), cfg, RandomStream(0))
    assert v != pytest.approx(partial_exp(4), rel=1e-9)
    assert v == pytest.approx(partial_exp(4), rel=1e-2)


def test_picard_zero_f_matches_fk():
    p = semilinear_problem(2, 0.5, "exp_inner", "zero", {"c": 0.5})
    x = np.array([0.2, 0.4])
    pv, pci = picard_mc(p, 0.5, x, PicardConfig(replicates=20_000), RandomStream(5))
    fv, fci = fk_mc(p, 0.5, x, 20_000, RandomStream(6))
    assert abs(pv - fv) <= math.hypot(pci, fci)


def test_picard_composed_closed_form():
    p = semilinear_problem(1, 0.5, "sqnorm", "linear", f_params={"lam": 1.0})
    cfg = PicardConfig(picard_iterations=5, time_nodes=3, inner_samples=1, replicates=3000)
    v, ci = picard_mc(p, 0.5, np.zeros(1), cfg, RandomStream(7))
    exact = math.exp(0.5) * 1.0
    assert exact == pytest.approx(1.6487, abs=1e-4)
    assert abs(v - exact) <= ci


def test_picard_budget_and_config_checks():
    p = semilinear_problem(1, 1.0, "sqnorm", "linear")
    with pytest.raises(BudgetExceededError):
        picard_mc(p, 1.0, np.zeros(1), PicardConfig(picard_iterations=8, time_nodes=16),
                  RandomStream(0))
    with pytest.raises(ConfigError):
        PicardConfig(picard_iterations=0)
    with pytest.raises(ConfigError):
        picard_mc(p, 1.0, np.zeros(2), PicardConfig(replicates=2), RandomStream(0))


def test_picard_cost_formula():
    cfg = PicardConfig(picard_iterations=2, time_nodes=3, inner_samples=2)
    # phi draws: S (1 + 6 + 36); f evaluations: 6 + 36
    assert cfg.cost() == 2 * 43 + 42
    assert cfg.cost(integral=False) == 2
