"""Deep splitting for du/dt = Laplace(u) + f(u).

[0, T] is cut into N steps of length h = T/N. On each step the nonlinearity
is frozen: the value function jumps to G_n = U_n + h f(U_n) and then flows
under the heat equation for time h, i.e.

    U_{n+1}(x) = E[G_n(x + sigma W)],   sigma = sqrt(2 h).

U_0 = phi. In ``nn`` mode each U_{n+1} is a network regressed on
G_n(xi + sigma W); in ``mc`` mode it is a nested Monte Carlo average.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from kspl import parallel
from kspl.errors import BudgetExceededError, ConfigError
from kspl.kolmogorov import TrainedSurrogate, _check_targets, fit
from kspl.sampling import RandomStream, mix64, sample_normal, sample_uniform_cube
from kspl.stats import Z95

log = logging.getLogger(__name__)

DEFAULT_BUDGET_CAP = 10**8


def _values(u, X, start=0):
    if isinstance(u, MCValue):
        return u._values_at(X, start)[0]
    return u(X)


@dataclass
class SplittingState:
    problem: object  # SemilinearProblem
    N: int
    values: list = field(default_factory=list)

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not self.values:
            self.values = [self.problem.phi]

    @property
    def n(self):
        return len(self.values) - 1

    @property
    def h(self):
        return self.problem.T / self.N

    @property
    def sigma(self):
        return math.sqrt(2.0 * self.problem.T / self.N)

    def tau(self, n):
        return n * self.problem.T / self.N

    def _require_open(self):
        if self.n >= self.N:
            raise ConfigError(f"all {self.N} steps are already built")


def jump(f, h, v):
    return v + h * f(v)


def frozen_target(state, y, n=None):
    """G_n(y) = U_n(y) + (T/N) f(U_n(y)) for a point or an ``(m, d)`` array."""
    n = state.n if n is None else n
    y = np.asarray(y, dtype=np.float64)
    Y = np.atleast_2d(y)
    g = jump(state.problem.f, state.h, _values(state.values[n], Y))
    return float(g[0]) if y.ndim == 1 else g


def training_cube(state, inflation):
    n = state.n
    return state.problem.domain.inflate(inflation * state.sigma * math.sqrt(state.N - n))


def step_seed(seed, n):
    return seed if n == 0 else mix64(seed, "split-step", n)


def split_step_train(state, plan, inflation=3.0, warm_start=True):
    """Fit U_{n+1} by regression on G_n(xi + sigma W) and append it."""
    state._require_open()
    problem, n = state.problem, state.n
    plan.check(problem.d)
    cube = training_cube(state, inflation)
    seed = step_seed(plan.seed, n)
    step_plan = replace(plan, seed=seed)
    root = RandomStream(seed)
    xi_stream, w_stream = root.child("xi"), root.child("W")
    prev, f, h, sigma = state.values[n], problem.f, state.h, state.sigma

    def sampler(k):
        xi = sample_uniform_cube(xi_stream, cube, plan.batch_size)
        W = sample_normal(w_stream, problem.d, plan.batch_size)
        z = xi + sigma * W
        y = jump(f, h, prev(z))
        _check_targets(y, z)
        return xi, y

    init = None
    if warm_start and isinstance(prev, TrainedSurrogate) \
            and prev.params.architecture == plan.architecture:
        init = prev.params
    surrogate = fit(sampler, step_plan, init, fingerprint=problem.fingerprint())
    state.values.append(surrogate)
    log.info("step %d/%d trained on [%.3f, %.3f]^%d, final loss %.6g",
             n + 1, state.N, cube.a, cube.b, problem.d, surrogate.log[-1][1])
    return state


class MCValue:
    """U_{n+1} as a nested Monte Carlo average over G_n.

    Randomness is addressed by path index: the k-th inner sample of the point
    with index i has index ``i * n_inner + k`` and reads its normal vector at
    that position of this level's stream. Child indices of a contiguous block
    of points are contiguous, so every level draws one contiguous range.
    """

    def __init__(self, prev, n_inner, stream, f, h, sigma, d, level):
        if n_inner < 1:
            raise ConfigError("n_inner must be >= 1")
        self.prev, self.n_inner, self.stream = prev, int(n_inner), stream
        self.f, self.h, self.sigma, self.d, self.level = f, h, sigma, d, level

    def cost_per_point(self):
        """Total G evaluations below one query point."""
        below = self.prev.cost_per_point() if isinstance(self.prev, MCValue) else 1
        return self.n_inner * below

    def _chunk(self, X, start, c0, c1):
        k, d = self.n_inner, self.d
        parent = np.arange(c0, c1) // k
        first = start * k + c0
        W = self.stream.at(first * d).normal((c1 - c0, d))
        Y = X[parent] + self.sigma * W
        g = jump(self.f, self.h, _values(self.prev, Y, first))
        P = X.shape[0]
        cnt = np.bincount(parent, minlength=P).astype(np.float64)
        # shift by the first sample of each point so equal samples give an exact mean
        lead = np.zeros(P)
        lead[parent[::-1]] = g[::-1]
        s = np.bincount(parent, g - lead[parent], minlength=P)
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.where(cnt > 0, lead + s / cnt, 0.0)
        m2 = np.bincount(parent, (g - m[parent]) ** 2, minlength=P)
        return cnt, m, m2

    def _values_at(self, X, start, threaded=False):
        P = X.shape[0]
        total = P * self.n_inner
        if threaded:
            parts = parallel.map_chunks(lambda lo, hi: self._chunk(X, start, lo, hi), total)
        else:
            parts = [self._chunk(X, start, lo, hi) for lo, hi in parallel.chunk_bounds(total)]
        n = np.zeros(P)
        mean = np.zeros(P)
        m2 = np.zeros(P)
        for nb, mb, m2b in parts:
            tot = n + nb
            with np.errstate(invalid="ignore", divide="ignore"):
                delta = mb - mean
                frac = np.where(tot > 0, nb / tot, 0.0)
                mean = mean + delta * frac
                m2 = m2 + m2b + delta * delta * n * frac
            n = tot
        return mean, m2

    def evaluate(self, X, budget_cap=DEFAULT_BUDGET_CAP):
        """Values and 95% half-widths at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        cost = X.shape[0] * self.cost_per_point()
        if cost > budget_cap:
            raise BudgetExceededError(
                f"nested Monte Carlo needs {cost:.3g} evaluations, cap is {budget_cap:.3g}")
        mean, m2 = self._values_at(X, 0, threaded=True)
        k = self.n_inner
        if k > 1:
            ci = Z95 * np.sqrt(np.maximum(m2, 0.0) / (k - 1) / k)
        else:
            ci = np.full(mean.shape, np.nan)
        return mean, ci

    def __call__(self, X):
        return self.evaluate(X)[0]


def split_step_mc(state, n_inner, query_points=None, seed=0, budget_cap=DEFAULT_BUDGET_CAP):
    """Append U_{n+1} as a nested Monte Carlo value; optionally evaluate it.

    Returns ``(values, ci)`` at ``query_points`` when given, else ``None``.
    """
    state._require_open()
    n = state.n
    stream = RandomStream(seed).child("mc-level", n + 1)
    value = MCValue(state.values[n], n_inner, stream, state.problem.f, state.h,
                    state.sigma, state.problem.d, n + 1)
    if query_points is not None:
        # check the budget before committing the level
        Xq = np.atleast_2d(np.asarray(query_points, dtype=np.float64))
        if Xq.shape[0] * value.cost_per_point() > budget_cap:
            raise BudgetExceededError(
                f"nested Monte Carlo needs {Xq.shape[0] * value.cost_per_point():.3g} "
                f"evaluations, cap is {budget_cap:.3g}")
    state.values.append(value)
    if query_points is None:
        return None
    return value.evaluate(query_points, budget_cap)


@dataclass
class SplittingResult:
    evaluator: object
    state: SplittingState
    provenance: list

    def __call__(self, X):
        return self.evaluator(np.atleast_2d(X))


def _fit_initial(state, plan, inflation):
    """Optionally replace U_0 = phi by a network fitted to phi."""
    problem = state.problem
    cube = training_cube(state, inflation)
    root = RandomStream(mix64(plan.seed, "initial-fit"))
    xi_stream = root.child("xi")

    def sampler(k):
        xi = sample_uniform_cube(xi_stream, cube, plan.batch_size)
        return xi, problem.phi(xi)

    net = fit(sampler, replace(plan, seed=root.seed), fingerprint=problem.fingerprint())
    state.values[0] = net
    return net


def solve(problem, N, plan=None, mode="nn", *, inflation=3.0, warm_start=True,
          inner=None, seed=0, budget_cap=DEFAULT_BUDGET_CAP, fit_initial=False):
    """Run all N splitting steps and return a :class:`SplittingResult`.

    ``inner`` lists the per-level inner sample counts for ``mc`` mode
    (level n+1 uses ``inner[n]``); a single integer applies to every level.
    """
    state = SplittingState(problem, N)
    provenance = []
    if mode == "nn":
        if plan is None:
            raise ConfigError("nn mode needs a TrainingPlan")
        if fit_initial:
            net = _fit_initial(state, plan, inflation)
            provenance.append({"step": 0, "kind": "initial-fit", "final_loss": net.log[-1][1]})
        for n in range(N):
            cube = training_cube(state, inflation)
            split_step_train(state, plan, inflation, warm_start)
            sur = state.values[-1]
            provenance.append({
                "step": n + 1, "kind": "nn", "cube": [cube.a, cube.b],
                "seed": step_seed(plan.seed, n), "training_log": sur.log,
            })
    elif mode == "mc":
        if inner is None:
            inner = 1
        if np.isscalar(inner):
            inner = [int(inner)] * N
        if len(inner) != N:
            raise ConfigError(f"need {N} inner sample counts, got {len(inner)}")
        cost = 1
        for k in inner:
            cost *= int(k)
        if cost > budget_cap:
            raise BudgetExceededError(
                f"nested Monte Carlo needs {cost:.3g} evaluations per point, "
                f"cap is {budget_cap:.3g}")
        for n in range(N):
            split_step_mc(state, inner[n], seed=seed, budget_cap=budget_cap)
            provenance.append({"step": n + 1, "kind": "mc", "n_inner": int(inner[n]),
                               "seed": seed})
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return SplittingResult(state.values[-1], state, provenance)
