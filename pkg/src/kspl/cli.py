"""Command-line entry point.

    kspl run CONFIG.json [--out DIR] [--seed U64] [--threads N]
    kspl catalog

Exit codes: 0 success, 1 oracle disagreement (oracle-check only),
2 invalid input, 3 numerical guard or budget abort.
"""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import jsonschema
import numpy as np

import kspl
from kspl import parallel
from kspl._backend import BACKEND
from kspl.catalog import list_catalog, make_f, make_phi
from kspl.errors import BudgetExceededError, ConfigError, NumericalGuardError
from kspl.io import save_params, write_csv
from kspl.kolmogorov import TrainedSurrogate, TrainingPlan, train
from kspl.metrics import l2_error, param_audit, rate_experiment
from kspl.nn import NetworkArchitecture
from kspl.optim import OptimizerConfig, default_optimizer
from kspl.oracles import PicardConfig, closed_form, fk_mc, picard_mc
from kspl.problems import HeatProblem, SemilinearProblem
from kspl.sampling import CubeDomain, RandomStream, mix64
from kspl.splitting import solve

log = logging.getLogger("kspl")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_entry = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
    "required": ["name"],
    "additionalProperties": False,
}
_picard = {
    "type": "object",
    "properties": {
        "picard_iterations": _posint, "time_nodes": _posint, "inner_samples": _posint,
        "replicates": {"type": "integer", "minimum": 2},
        "quadrature": {"enum": ["gauss", "midpoint"]},
        "bootstrap": _posint, "budget_cap": _posint,
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["kolmogorov", "splitting", "rate", "audit", "oracle-check"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "string"},
        "problem": {
            "type": "object",
            "properties": {
                "d": _posint, "T": _pos, "rho": _pos,
                "domain": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "phi": _entry, "f": _entry,
            },
            "required": ["d", "T", "phi"],
            "additionalProperties": False,
        },
        "plan": {
            "type": "object",
            "properties": {
                "architecture": {"type": "array", "items": _posint, "minItems": 3},
                "batch_size": _posint, "total_steps": _posint, "eval_every": _posint,
                "optimizer": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["plain-sgd", "adam"]},
                        "step_size": _pos, "adam_beta1": _num, "adam_beta2": _num,
                        "adam_epsilon": _pos,
                        "decay": {"type": "array", "items": {
                            "type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "splitting": {
            "type": "object",
            "properties": {
                "N": _posint, "mode": {"enum": ["nn", "mc"]}, "inflation": {"type": "number", "minimum": 0},
                "warm_start": {"type": "boolean"}, "fit_initial": {"type": "boolean"},
                "inner": {"oneOf": [_posint, {"type": "array", "items": _posint}]},
                "query": {"type": "array", "items": {"type": "array", "items": _num}},
                "budget_cap": _posint,
            },
            "required": ["N"],
            "additionalProperties": False,
        },
        "rate": {
            "type": "object",
            "properties": {
                "N_list": {"type": "array", "items": _posint, "minItems": 4},
                "mode": {"enum": ["nn", "mc"]},
                "outer": _posint, "inner": _posint,
                "x": {"type": "array", "items": _num},
                "picard": _picard,
            },
            "required": ["N_list"],
            "additionalProperties": False,
        },
        "audit": {
            "type": "object",
            "properties": {
                "d_list": {"type": "array", "items": _posint, "minItems": 1},
                "eps_list": {"type": "array", "items": _pos, "minItems": 1},
                "T": _pos, "rho": _pos, "phi": {"type": "string"},
                "steps": _posint, "batch_size": _posint, "n_eval": {"type": "integer", "minimum": 2},
            },
            "required": ["d_list", "eps_list"],
            "additionalProperties": False,
        },
        "oracle_check": {
            "type": "object",
            "properties": {
                "d_list": {"type": "array", "items": _posint, "minItems": 1},
                "problems": {"type": "array", "items": _entry, "minItems": 1},
                "T": _pos, "x": _num, "n_samples": {"type": "integer", "minimum": 2},
                "picard": _picard,
            },
            "additionalProperties": False,
        },
        "evaluation": {
            "type": "object",
            "properties": {"n_points": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"enum": ["kolmogorov", "splitting", "rate"]}}},
         "then": {"required": ["problem"]}},
        {"if": {"properties": {"kind": {"const": "splitting"}}},
         "then": {"required": ["splitting"]}},
        {"if": {"properties": {"kind": {"const": "rate"}}}, "then": {"required": ["rate"]}},
        {"if": {"properties": {"kind": {"const": "audit"}}}, "then": {"required": ["audit"]}},
    ],
}

DEFAULT_ORACLE_PROBLEMS = [
    {"name": "constant", "params": {"c": 1.5}},
    {"name": "linear", "params": {"c": 0.5}},
    {"name": "sqnorm", "params": {}},
    {"name": "exp_inner", "params": {"c": 0.2}},
]


def _json_path(err):
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def load_config(path):
    """Parse and schema-validate a config file; raises ConfigError with the failing path."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: "
                          f"{exc.msg}") from None
    validate_config(cfg, str(path))
    return cfg


def validate_config(cfg, source="config"):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{source}: {_json_path(e)}: {e.message}")
    if "problem" in cfg:
        try:
            build_problem(cfg["problem"])
        except ConfigError as exc:
            raise ConfigError(f"{source}: $.problem: {exc}") from None


def build_problem(section):
    d = section["d"]
    a, b = section.get("domain", [0.0, 1.0])
    phi = make_phi(section["phi"]["name"], d, section["phi"].get("params"))
    heat = HeatProblem(d, float(section["T"]), float(section.get("rho", 1.0)),
                       CubeDomain(float(a), float(b), d), phi)
    if "f" in section:
        return SemilinearProblem(heat, make_f(section["f"]["name"], section["f"].get("params")))
    return heat


def build_plan(section, d, seed):
    section = section or {}
    arch = NetworkArchitecture(tuple(section.get("architecture", (d, 50, 50, 1))))
    steps = section.get("total_steps", 20_000)
    if "optimizer" in section:
        opt = OptimizerConfig(**{k: (tuple(map(tuple, v)) if k == "decay" else v)
                                 for k, v in section["optimizer"].items()})
    else:
        opt = default_optimizer(steps)
    return TrainingPlan(arch, section.get("batch_size", 256), steps, opt, seed,
                        section.get("eval_every", 500))


def _eval_points(cfg):
    return cfg.get("evaluation", {}).get("n_points", 100_000)


# ------------------------------------------------------------------ experiments

def _run_kolmogorov(cfg, out, seed):
    problem = build_problem(cfg["problem"])
    if isinstance(problem, SemilinearProblem):
        if not problem.f.is_zero:
            raise ConfigError("$.problem.f: kolmogorov runs need f = zero (or no f)")
        problem = problem.base
    plan = build_plan(cfg.get("plan"), problem.d, seed)
    plan.check(problem.d)
    sur = train(problem, plan)
    files = [write_csv(out / "training_log.csv", ["step", "loss_estimate", "ci"], sur.log)]
    save_params(sur.params, out / "surrogate.bin",
                {"problem": problem.spec(), "fingerprint": problem.fingerprint(), "seed": seed})
    files.append(out / "surrogate.bin")
    exact = closed_form(problem)
    if exact is not None:
        rep = l2_error(sur, lambda X: exact(problem.T, X), problem.domain, _eval_points(cfg),
                       RandomStream(mix64(seed, "evaluation")))
        files.append(write_csv(out / "errors.csv", ["metric", "value", "ci"], [
            ("l2_error", rep.l2_error, rep.ci_halfwidth),
            ("relative_l2_error", rep.relative, rep.ci_halfwidth / rep.exact_norm),
        ]))
    return files, {"plan": _plan_record(plan)}


def _plan_record(plan):
    return {"architecture": list(plan.architecture.layer_sizes), "batch_size": plan.batch_size,
            "total_steps": plan.total_steps, "eval_every": plan.eval_every, "seed": plan.seed,
            "optimizer": asdict(plan.optimizer)}


def _as_semilinear(problem):
    if isinstance(problem, SemilinearProblem):
        return problem
    return SemilinearProblem(problem, make_f("zero"))


def _run_splitting(cfg, out, seed):
    problem = _as_semilinear(build_problem(cfg["problem"]))
    sp = cfg["splitting"]
    N, mode = sp["N"], sp.get("mode", "nn")
    files = []
    extra = {"N": N, "mode": mode, "sigma": math.sqrt(2 * problem.T / N)}
    if mode == "nn":
        plan = build_plan(cfg.get("plan"), problem.d, seed)
        inflation = sp.get("inflation", 3.0)
        res = solve(problem, N, plan, "nn", inflation=inflation,
                    warm_start=sp.get("warm_start", True), fit_initial=sp.get("fit_initial", False))
        rows = [(rec["step"], k, l, c) for rec in res.provenance
                for k, l, c in rec.get("training_log", ())]
        files.append(write_csv(out / "training_log.csv",
                               ["split_step", "step", "loss_estimate", "ci"], rows))
        nets = [(n, v) for n, v in enumerate(res.state.values) if isinstance(v, TrainedSurrogate)]
        for i, (n, sur) in enumerate(nets):
            path = out / f"step_{i:03d}.bin"
            save_params(sur.params, path, {"value_index": n, "problem": problem.spec()})
            files.append(path)
        extra.update(inflation=inflation, plan=_plan_record(plan),
                     steps=[{k: v for k, v in r.items() if k != "training_log"}
                            for r in res.provenance])
        exact = closed_form(problem)
        if exact is not None:
            rep = l2_error(res, lambda X: exact(problem.T, X), problem.domain, _eval_points(cfg),
                           RandomStream(mix64(seed, "evaluation")))
            files.append(write_csv(out / "errors.csv", ["metric", "value", "ci"], [
                ("l2_error", rep.l2_error, rep.ci_halfwidth),
                ("relative_l2_error", rep.relative, rep.ci_halfwidth / rep.exact_norm),
            ]))
    else:
        inner = sp.get("inner", 1)
        cap = sp.get("budget_cap", 10**8)
        res = solve(problem, N, mode="mc", inner=inner, seed=seed, budget_cap=cap)
        query = np.asarray(sp.get("query", [[0.0] * problem.d]), dtype=np.float64)
        if query.ndim != 2 or query.shape[1] != problem.d:
            raise ConfigError(f"$.splitting.query: points must have dimension {problem.d}")
        vals, ci = res.evaluator.evaluate(query, cap)
        exact = closed_form(problem)
        ref = exact(problem.T, query) if exact is not None else np.full(len(query), np.nan)
        files.append(write_csv(out / "values.csv", ["point", "value", "ci", "exact", "error"],
                               [(q.tolist(), v, c, r, abs(v - r))
                                for q, v, c, r in zip(query, vals, ci, ref)]))
        extra.update(inner=inner, budget_cap=cap)
    return files, extra


def _run_rate(cfg, out, seed):
    problem = _as_semilinear(build_problem(cfg["problem"]))
    rc = cfg["rate"]
    mode = rc.get("mode", "mc")
    budgets = {"outer": rc.get("outer", 2**16), "inner": rc.get("inner", 1)}
    if "picard" in rc:
        budgets["picard"] = rc["picard"]
    plan = build_plan(cfg.get("plan"), problem.d, seed) if mode == "nn" else None
    fit = rate_experiment(problem, rc["N_list"], mode, budgets, rc.get("x"), plan, seed)
    files = [write_csv(out / "rate.csv", ["N", "error", "ci", "envelope_ratio"], fit.rows())]
    summary = {"slope": fit.slope, "envelope_constant": fit.envelope_constant,
               "monotone": fit.monotone, "oracle": fit.oracle, "x": fit.x}
    (out / "rate_fit.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(out / "rate_fit.json")
    return files, {"budgets": budgets}


def _run_audit(cfg, out, seed):
    ac = cfg["audit"]
    res = param_audit(ac["d_list"], ac["eps_list"], T=ac.get("T", 0.5), rho=ac.get("rho", 1.0),
                      phi=ac.get("phi", "sqnorm"), steps=ac.get("steps", 4000),
                      batch_size=ac.get("batch_size", 256), n_eval=ac.get("n_eval", 20_000),
                      seed=seed)
    files = [write_csv(out / "audit.csv", ["d", "eps", "arch", "P", "error", "verified"],
                       [(r.d, r.eps, r.architecture, r.P, r.error, r.verified)
                        for r in res.rows])]
    (out / "audit_fit.json").write_text(json.dumps(res.fit, indent=2, sort_keys=True) + "\n")
    files.append(out / "audit_fit.json")
    return files, {}


def oracle_check(d_list=(1, 5), problems=None, T=0.5, x=0.3, n_samples=100_000,
                 picard=None, seed=0):
    """Pairwise agreement of closed form, fk_mc and picard_mc (f = 0).

    Returns rows ``(phi, d, closed, fk, fk_ci, picard, picard_ci, agree)``.
    """
    problems = problems or DEFAULT_ORACLE_PROBLEMS
    pcfg = PicardConfig(**(picard or {"replicates": 4096, "inner_samples": 16}))
    rows = []
    for entry in problems:
        for d in d_list:
            problem = build_problem({"d": d, "T": T, "phi": entry, "f": {"name": "zero"}})
            pt = np.full(d, float(x))
            exact = closed_form(problem)
            cf = float(exact(T, pt[None])[0]) if exact is not None else float("nan")
            fk, fk_ci = fk_mc(problem, T, pt, n_samples, RandomStream(mix64(seed, "fk", d)))
            pc, pc_ci = picard_mc(problem, T, pt, pcfg, RandomStream(mix64(seed, "picard", d)))
            agree = (abs(fk - cf) <= fk_ci and abs(pc - cf) <= pc_ci
                     and abs(fk - pc) <= math.hypot(fk_ci, pc_ci))
            rows.append((entry["name"], d, cf, fk, fk_ci, pc, pc_ci, agree))
    return rows


def _run_oracle_check(cfg, out, seed):
    oc = cfg.get("oracle_check", {})
    rows = oracle_check(oc.get("d_list", (1, 5)), oc.get("problems"), oc.get("T", 0.5),
                        oc.get("x", 0.3), oc.get("n_samples", 100_000), oc.get("picard"), seed)
    files = [write_csv(out / "oracle_check.csv",
                       ["phi", "d", "closed_form", "fk_mc", "fk_ci", "picard_mc", "picard_ci",
                        "agree"], rows)]
    return files, {"all_agree": all(r[-1] for r in rows)}


RUNNERS = {
    "kolmogorov": _run_kolmogorov,
    "splitting": _run_splitting,
    "rate": _run_rate,
    "audit": _run_audit,
    "oracle-check": _run_oracle_check,
}


def run(config_path, out=None, seed=None, threads=None):
    """Execute one experiment; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = seed
        cfg.setdefault("seed", 0)
        out_dir = Path(out or cfg.get("output") or "kspl-out")
        if threads is not None:
            parallel.set_threads(threads)
        out_dir.mkdir(parents=True, exist_ok=True)
        files, extra = RUNNERS[cfg["kind"]](cfg, out_dir, cfg["seed"])
    except ConfigError as exc:
        print(f"kspl: invalid input: {exc}", file=sys.stderr)
        return 2
    except (NumericalGuardError, BudgetExceededError) as exc:
        print(f"kspl: aborted: {exc}", file=sys.stderr)
        return 3
    manifest = {
        "toolkit": "kspl", "version": kspl.__version__, "kernel_backend": BACKEND,
        "config": cfg, "seed": cfg["seed"],
        "stream_policy": ("Philox4x32-10 keyed by seed; per-purpose stream ids derived by "
                          "SplitMix64 hashing of labels; one 64-bit word per variate, "
                          "addressed by sample index"),
        "resolved": extra,
        "outputs": sorted(p.name for p in files),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                      default=str) + "\n")
    if cfg["kind"] == "oracle-check" and not extra["all_agree"]:
        print("kspl: oracle disagreement, see oracle_check.csv", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    logging.basicConfig(level=os.environ.get("KSPL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="kspl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
    p_run.add_argument("--threads", type=int, help="worker cap; results do not depend on it")
    sub.add_parser("catalog", help="list initial conditions and nonlinearities")
    args = parser.parse_args(argv)
    if args.command == "catalog":
        print(list_catalog())
        return 0
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("kspl: invalid input: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("kspl: invalid input: --threads must be >= 1", file=sys.stderr)
        return 2
    return run(args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
