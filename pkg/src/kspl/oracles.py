"""Reference solutions: closed forms, Feynman-Kac Monte Carlo and a Picard
fixed-point iteration with nested Monte Carlo (small d only)."""
import math
from dataclasses import dataclass

import numpy as np

from kspl import parallel
from kspl.errors import BudgetExceededError, ConfigError
from kspl.problems import HeatProblem, SemilinearProblem
from kspl.sampling import sample_normal
from kspl.stats import chunked_mean


def _split(problem):
    """(heat problem, nonlinearity or None)."""
    if isinstance(problem, SemilinearProblem):
        return problem.base, problem.f
    if isinstance(problem, HeatProblem):
        return problem, None
    raise ConfigError(f"not a problem: {problem!r}")


@dataclass
class ClosedFormSolution:
    fingerprint: str
    evaluator: object  # (t, X) -> u(t, X) for X of shape (m, d)
    note: str
    rho: float
    d: int
    f: object = None

    def __call__(self, t, X):
        return self.evaluator(t, np.atleast_2d(np.asarray(X, dtype=np.float64)))

    def residual(self, t, x, ht=1e-3, hx=1e-2):
        """du/dt - rho Laplace(u) - f(u) at one point, by 4th-order central differences."""
        x = np.asarray(x, dtype=np.float64)
        d = x.size
        u = lambda s, pts: self.evaluator(s, pts)
        ut = (-u(t + 2 * ht, x[None]) + 8 * u(t + ht, x[None])
              - 8 * u(t - ht, x[None]) + u(t - 2 * ht, x[None]))[0] / (12 * ht)
        E = np.eye(d) * hx
        pts = np.concatenate([x + 2 * E, x + E, x[None], x - E, x - 2 * E])
        v = u(t, pts)
        p2, p1, c, m1, m2 = v[:d], v[d:2 * d], v[2 * d], v[2 * d + 1:3 * d + 1], v[3 * d + 1:]
        lap = float(np.sum(-p2 + 16 * p1 - 30 * c + 16 * m1 - m2)) / (12 * hx * hx)
        fu = 0.0 if self.f is None else float(self.f(np.array([c]))[0])
        return ut - self.rho * lap - fu, c

    def self_test(self, stream, n_probes=100, tol=1e-6, t_range=(0.05, 1.0), box=1.0):
        """Largest scaled residual |res| / max(1, |u|) over random probes; raises above ``tol``."""
        worst = 0.0
        for _ in range(n_probes):
            t = t_range[0] + (t_range[1] - t_range[0]) * float(stream.uniform(1)[0])
            x = box * (2.0 * stream.uniform(self.d) - 1.0)
            r, u = self.residual(t, x)
            worst = max(worst, abs(r) / max(1.0, abs(u)))
        if worst > tol:
            raise AssertionError(f"closed form violates its PDE: scaled residual {worst:.3g}")
        return worst


def closed_form(problem):
    """Exact solution for catalog pairs, or ``None`` when not available.

    Covered: every initial condition with a known heat flow, combined with
    f = 0 or f(u) = lambda u (which multiplies the heat flow by e^{lambda t}).
    """
    heat, f = _split(problem)
    flow = heat.phi.heat
    if flow is None:
        return None
    rho = heat.rho
    if f is None or f.is_zero:
        ev = lambda t, X: flow(t, X, rho)
        note = f"heat flow of {heat.phi.name}"
    elif f.linear_rate is not None:
        lam = f.linear_rate
        ev = lambda t, X: math.exp(lam * t) * flow(t, X, rho)
        note = f"e^(lambda t) x heat flow of {heat.phi.name}, lambda={lam}"
    else:
        return None
    return ClosedFormSolution(problem.fingerprint(), ev, note, rho, heat.d, f)


def fk_mc(problem, t, x, n_samples, stream):
    """Plain Monte Carlo of E[phi(x + sqrt(2 rho t) W)]; returns ``(value, ci)``."""
    heat, _ = _split(problem)
    if n_samples < 2:
        raise ConfigError("fk_mc needs n_samples >= 2")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    d = heat.d
    scale = math.sqrt(2.0 * heat.rho * t)
    ws = stream.child("fk-W")

    def chunk(lo, hi):
        W = sample_normal(ws.at(lo * d), d, hi - lo)
        return heat.phi(x + scale * W)

    mean, ci, _ = chunked_mean(chunk, n_samples)
    return mean, ci


@dataclass(frozen=True)
class PicardConfig:
    """Picard sweeps K, time nodes M per integral, inner samples per node.

    ``replicates`` independent copies of the nested estimator are averaged and
    bootstrapped for the confidence interval.
    """

    picard_iterations: int = 6
    time_nodes: int = 5
    inner_samples: int = 1
    replicates: int = 64
    quadrature: str = "gauss"
    bootstrap: int = 1000
    budget_cap: int = 10**8

    def __post_init__(self):
        if self.picard_iterations < 1 or self.time_nodes < 1:
            raise ConfigError("picard_iterations and time_nodes must be >= 1")
        if self.inner_samples < 1 or self.replicates < 2:
            raise ConfigError("inner_samples must be >= 1 and replicates >= 2")
        if self.quadrature not in ("gauss", "midpoint"):
            raise ConfigError(f"unknown quadrature {self.quadrature!r}")

    def nodes(self):
        """Nodes and weights on [0, 1]."""
        M = self.time_nodes
        if self.quadrature == "midpoint":
            return (np.arange(M) + 0.5) / M, np.full(M, 1.0 / M)
        z, w = np.polynomial.legendre.leggauss(M)
        return 0.5 * (z + 1.0), 0.5 * w

    def cost(self, integral=True):
        """phi and f evaluations below one replicate."""
        S, M, K = self.inner_samples, self.time_nodes, self.picard_iterations
        if not integral:
            return S
        fan = M * S
        levels = [fan ** j for j in range(K + 1)]
        return S * sum(levels) + sum(levels[1:])


class _Picard:
    def __init__(self, heat, f, config, stream):
        self.heat, self.f, self.cfg = heat, f, config
        self.nodes, self.weights = config.nodes()
        self.stream = stream

    def phi_term(self, k, times, X, start):
        S, d = self.cfg.inner_samples, self.heat.d
        P = X.shape[0]
        W = self.stream.child("phi", k).at(start * S * d).normal((P * S, d))
        scale = np.sqrt(2.0 * self.heat.rho * np.repeat(times, S))
        vals = self.heat.phi(np.repeat(X, S, axis=0) + scale[:, None] * W)
        return vals.reshape(P, S).mean(axis=1)

    def iterate(self, k, times, X, start):
        """Iterate k at the rows of X (times per row); rows have indices start.."""
        out = self.phi_term(k, times, X, start)
        if k == 0:
            return out
        S, M, d = self.cfg.inner_samples, self.nodes.size, self.heat.d
        P = X.shape[0]
        fan = M * S
        # children ordered (point, node, sample)
        s = (times[:, None] * self.nodes[None, :])                 # (P, M)
        lag = np.repeat((times[:, None] - s).reshape(-1), S)       # (P*M*S,)
        ctimes = np.repeat(s.reshape(-1), S)
        W = self.stream.child("int", k).at(start * fan * d).normal((P * fan, d))
        Y = np.repeat(X, fan, axis=0) + np.sqrt(2.0 * self.heat.rho * lag)[:, None] * W
        v = self.iterate(k - 1, ctimes, Y, start * fan)
        fv = self.f(v).reshape(P, M, S).mean(axis=2)
        return out + times * (fv @ self.weights)


def _bootstrap_halfwidth(values, B, stream):
    R = values.size
    if np.ptp(values) == 0.0:
        return 0.0
    idx = stream.integers(R, (B, R))
    means = values[idx].mean(axis=1)
    lo, hi = np.quantile(means, [0.025, 0.975])
    return float(hi - lo) / 2.0


def picard_mc(problem, t, x, config, stream):
    """Picard iteration of u(t,x) = E[phi(x + sqrt(2t) W)] + int_0^t E[f(u(s, x + sqrt(2(t-s)) W))] ds.

    Iterate 0 is the linear heat flow; each sweep adds the time integral of f
    along the previous iterate, with quadrature in time and fresh inner Monte
    Carlo per node. Returns ``(value, ci)`` with a percentile-bootstrap
    half-width over independent replicates.
    """
    heat, f = _split(problem)
    integral = f is not None and not f.is_zero
    cost = config.replicates * config.cost(integral)
    if cost > config.budget_cap:
        raise BudgetExceededError(
            f"Picard oracle needs {cost:.3g} evaluations, cap is {config.budget_cap:.3g}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != heat.d:
        raise ConfigError(f"point has dimension {x.shape[1]}, problem has d={heat.d}")
    engine = _Picard(heat, f, config, stream.child("picard"))
    K = config.picard_iterations if integral else 0
    # replicate blocks sized so that the deepest level stays near one chunk
    leaves = (config.time_nodes * config.inner_samples) ** K * config.inner_samples
    block = max(1, parallel.CHUNK // max(1, leaves))

    def run(lo, hi):
        P = hi - lo
        return engine.iterate(K, np.full(P, float(t)), np.repeat(x, P, axis=0), lo)

    parts = parallel.map_chunks(run, config.replicates, block)
    reps = np.concatenate(parts)
    ci = _bootstrap_halfwidth(reps, config.bootstrap, stream.child("bootstrap"))
    return float(reps.mean()), ci
