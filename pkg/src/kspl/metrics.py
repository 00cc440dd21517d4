"""Error functionals, convergence-rate experiments and the parameter audit."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from kspl.errors import ConfigError
from kspl.kolmogorov import TrainingPlan, train
from kspl.nn import NetworkArchitecture, param_count
from kspl.oracles import PicardConfig, closed_form, picard_mc
from kspl.problems import heat_problem
from kspl.sampling import RandomStream, mix64, sample_uniform_cube
from kspl.splitting import solve
from kspl.stats import chunked_mean

log = logging.getLogger(__name__)


@dataclass
class ErrorReport:
    l2_error: float
    ci_halfwidth: float
    n_eval_points: int
    domain: object
    exact_norm: float = float("nan")

    @property
    def relative(self):
        return self.l2_error / self.exact_norm


def _rms(mean_sq, ci_sq):
    rms = math.sqrt(max(mean_sq, 0.0))
    # delta method: d sqrt(m) = dm / (2 sqrt(m))
    ci = ci_sq / (2.0 * rms) if rms > 0 else math.sqrt(ci_sq)
    return rms, ci


def l2_error(approx, exact, domain, n_points, stream):
    """Root-mean-square gap between two functions over uniform points of the cube."""
    if n_points < 2:
        raise ConfigError("l2_error needs n_points >= 2")
    xs = stream.child("l2-points")
    d = domain.d

    def points(lo, hi):
        return sample_uniform_cube(xs.at(lo * d), domain, hi - lo)

    def gap(lo, hi):
        X = points(lo, hi)
        g = approx(X) - exact(X)
        return g * g

    def norm(lo, hi):
        e = exact(points(lo, hi))
        return e * e

    m, ci, _ = chunked_mean(gap, n_points)
    err, err_ci = _rms(m, ci)
    nm, _, _ = chunked_mean(norm, n_points)
    return ErrorReport(err, err_ci, n_points, domain, math.sqrt(nm))


# ---------------------------------------------------------------- rate fitting

@dataclass
class RateFit:
    N: list
    errors: list
    cis: list
    slope: float
    envelope_constant: float
    x: list = None
    oracle: str = ""
    monotone: bool = True

    def __post_init__(self):
        if len(self.N) < 4:
            raise ConfigError("a rate fit needs at least 4 points")

    @property
    def envelope_ratios(self):
        C = self.envelope_constant
        return [e * math.sqrt(n) / C if C > 0 else float("nan")
                for n, e in zip(self.N, self.errors)]

    def within_envelope(self, slack=1e-12):
        C = self.envelope_constant
        return all(e <= C / math.sqrt(n) * (1 + slack) for n, e in zip(self.N, self.errors))

    def rows(self):
        return [(n, e, c, r) for n, e, c, r in
                zip(self.N, self.errors, self.cis, self.envelope_ratios)]


def fit_rate(N_list, errors, cis=None, **kw):
    """Least-squares slope in log-log and the N^{-1/2} constant set at the smallest N."""
    N_list = [int(n) for n in N_list]
    errors = [float(e) for e in errors]
    cis = [0.0] * len(errors) if cis is None else [float(c) for c in cis]
    if all(e > 0 for e in errors):
        slope = float(np.polyfit(np.log(N_list), np.log(errors), 1)[0])
    else:
        slope = float("nan")
    C = errors[0] * math.sqrt(N_list[0])
    monotone = all(b <= a for a, b in zip(errors, errors[1:]))
    return RateFit(N_list, errors, cis, slope, C, monotone=monotone, **kw)


def rate_experiment(problem, N_list, mode="mc", budgets=None, x=None, plan=None, seed=0):
    """Terminal pointwise error of the splitting scheme at ``x`` for each N.

    ``budgets`` keys: ``outer`` (top-level Monte Carlo samples, default 2**16),
    ``inner`` (samples per lower level, default 1), ``picard`` (dict of
    PicardConfig fields for problems without a closed form).
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 4 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N_list must be strictly increasing with at least 4 entries")
    budgets = dict(budgets or {})
    outer = int(budgets.get("outer", 2**16))
    inner = int(budgets.get("inner", 1))
    x = np.zeros(problem.d) if x is None else np.asarray(x, dtype=np.float64)
    T = problem.T

    exact = closed_form(problem)
    if exact is not None:
        ref, ref_ci, oracle = float(exact(T, x[None])[0]), 0.0, "closed_form"
    else:
        cfg = PicardConfig(**budgets.get("picard", {}))
        ref, ref_ci = picard_mc(problem, T, x, cfg, RandomStream(mix64(seed, "rate-oracle")))
        oracle = "picard_mc"

    errors, cis = [], []
    for N in N_list:
        if mode == "mc":
            res = solve(problem, N, mode="mc", inner=[inner] * (N - 1) + [outer], seed=seed)
            v, ci = res.evaluator.evaluate(x[None])
            v, ci = float(v[0]), float(ci[0])
        else:
            res = solve(problem, N, plan=plan, mode="nn")
            v, ci = float(res(x[None])[0]), 0.0
        errors.append(abs(v - ref))
        cis.append(math.hypot(ci, ref_ci))
        log.info("N=%d value %.8g error %.4g +- %.2g", N, v, errors[-1], cis[-1])
    fit = fit_rate(N_list, errors, cis, x=x.tolist(), oracle=oracle)
    if not fit.monotone:
        log.warning("error sequence is not monotone in N (Monte Carlo noise?)")
    return fit


# ---------------------------------------------------------------- parameter audit

def default_ladder(d):
    """Widths 10..200, two then three hidden layers per width; P strictly increasing."""
    rungs = []
    for w in (10, 25, 50, 100, 200):
        rungs.append(NetworkArchitecture((d, w, w, 1)))
        rungs.append(NetworkArchitecture((d, w, w, w, 1)))
    return rungs


@dataclass
class AuditRow:
    d: int
    eps: float
    architecture: tuple
    P: int
    error: float
    verified: bool
    achieved: bool
    budget_steps: int


@dataclass
class AuditResult:
    rows: list
    fit: dict = field(default_factory=dict)


def _audit_fit(rows):
    ok = [r for r in rows if r.achieved]
    if len(ok) < 3:
        return {}
    A = np.column_stack([np.ones(len(ok)), [math.log(r.d) for r in ok],
                         [math.log(1.0 / r.eps) for r in ok]])
    b = np.array([math.log(r.P) for r in ok])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return {"log_c": float(coef[0]), "exp_d": float(coef[1]), "exp_inv_eps": float(coef[2]),
            "n_rows": len(ok)}


def param_audit(d_list, eps_list, T=0.5, rho=1.0, phi="sqnorm", steps=4000, batch_size=256,
                n_eval=20_000, seed=0, ladder=default_ladder):
    """Smallest ladder rung whose trained error on [0,1]^d is at most eps.

    Each rung is trained once per d. A rung qualifies when its error on a
    selection point set is <= eps and an independent re-evaluation on fresh
    points confirms it.
    """
    rows = []
    for d in d_list:
        problem = heat_problem(d, T, phi, rho=rho)
        exact = closed_form(problem)
        ref = lambda X: exact(T, X)
        rungs = ladder(d)
        pcs = [param_count(a) for a in rungs]
        if any(b <= a for a, b in zip(pcs, pcs[1:])):
            raise ConfigError("architecture ladder must have strictly increasing parameter counts")
        cache = {}

        def evaluate(i):
            if i not in cache:
                plan = TrainingPlan(rungs[i], batch_size, steps, seed=mix64(seed, d, i))
                sur = train(problem, plan)
                sel = l2_error(sur, ref, problem.domain, n_eval, RandomStream(mix64(seed, "sel", d)))
                ver = l2_error(sur, ref, problem.domain, n_eval, RandomStream(mix64(seed, "ver", d)))
                cache[i] = (sel.l2_error, ver.l2_error)
                log.info("audit d=%d rung %s: error %.4g (verify %.4g)",
                         d, rungs[i].layer_sizes, sel.l2_error, ver.l2_error)
            return cache[i]

        for eps in sorted(eps_list, reverse=True):
            row = None
            for i, arch in enumerate(rungs):
                sel, ver = evaluate(i)
                if sel <= eps and ver <= eps:
                    row = AuditRow(d, eps, arch.layer_sizes, pcs[i], ver, True, True,
                                   steps * (i + 1))
                    break
            if row is None:
                best = min(cache, key=lambda i: cache[i][1])
                row = AuditRow(d, eps, rungs[best].layer_sizes, pcs[best], cache[best][1],
                               False, False, steps * len(rungs))
            rows.append(row)
    return AuditResult(rows, _audit_fit(rows))
