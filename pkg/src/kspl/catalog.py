"""Registries of initial conditions (phi) and nonlinearities (f).

Entries are built from a name plus a parameter dict, the same form used in
experiment configs. Initial conditions carry the closed-form heat flow where
one exists; nonlinearities carry a declared Lipschitz constant.

Composed expressions are JSON trees, e.g.::

    {"op": "max", "args": [{"op": "coord", "index": 0},
                           {"op": "affine", "arg": {"op": "coordsum"},
                            "scale": 0.5, "shift": -1.0}]}

Operators: ``const`` (value), ``coord`` (index), ``coordsum``, ``var`` (the
scalar argument of f), ``sum``/``prod``/``min``/``max`` (args), and
``affine`` (arg, scale, shift), ``exp``/``sin`` (arg).
"""
from dataclasses import dataclass

import numpy as np

from kspl.errors import ConfigError


def _vector_param(c, d, name):
    arr = np.asarray(c, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    if arr.shape != (d,):
        raise ConfigError(f"{name}: coefficient vector has length {arr.size}, d={d}")
    return arr


# ---------------------------------------------------------------- expressions

_NARY = {"sum", "prod", "min", "max"}
_UNARY = {"exp", "sin", "affine"}


def compile_expr(node, d=None, allow_var=False, path="expr"):
    """Compile an expression tree to a vectorized callable.

    For initial conditions the callable maps ``(m, d)`` arrays to ``(m,)``;
    with ``allow_var`` it maps an array of scalars elementwise.
    """
    if not isinstance(node, dict) or "op" not in node:
        raise ConfigError(f"{path}: expression node must be an object with 'op'")
    op = node["op"]
    if op == "const":
        value = float(node["value"])
        if allow_var:
            return lambda u: np.full(np.shape(u), value)
        return lambda X: np.full(X.shape[0], value)
    if op == "coord":
        if allow_var:
            raise ConfigError(f"{path}: 'coord' is not available in a nonlinearity")
        i = int(node["index"])
        if d is not None and not 0 <= i < d:
            raise ConfigError(f"{path}: coordinate index {i} out of range for d={d}")
        return lambda X: X[:, i]
    if op == "coordsum":
        if allow_var:
            raise ConfigError(f"{path}: 'coordsum' is not available in a nonlinearity")
        return lambda X: X.sum(axis=1)
    if op == "var":
        if not allow_var:
            raise ConfigError(f"{path}: 'var' is only available in a nonlinearity")
        return lambda u: np.asarray(u, dtype=np.float64)
    if op in _NARY:
        args = node.get("args")
        if not isinstance(args, list) or not args:
            raise ConfigError(f"{path}.args: '{op}' needs a nonempty list")
        fns = [compile_expr(a, d, allow_var, f"{path}.args[{k}]") for k, a in enumerate(args)]
        if op == "sum":
            return lambda X: sum(f(X) for f in fns)
        if op == "prod":
            def prod(X):
                out = fns[0](X)
                for f in fns[1:]:
                    out = out * f(X)
                return out
            return prod
        reduce = np.minimum if op == "min" else np.maximum

        def extremum(X):
            out = fns[0](X)
            for f in fns[1:]:
                out = reduce(out, f(X))
            return out
        return extremum
    if op in _UNARY:
        if "arg" not in node:
            raise ConfigError(f"{path}: '{op}' needs 'arg'")
        inner = compile_expr(node["arg"], d, allow_var, f"{path}.arg")
        if op == "exp":
            return lambda X: np.exp(inner(X))
        if op == "sin":
            return lambda X: np.sin(inner(X))
        scale, shift = float(node.get("scale", 1.0)), float(node.get("shift", 0.0))
        return lambda X: scale * inner(X) + shift
    raise ConfigError(f"{path}: unknown operator {op!r}")


# ------------------------------------------------------------ initial conditions

@dataclass
class InitialCondition:
    name: str
    params: dict
    d: int
    fn: object
    heat: object = None  # (t, X, rho) -> values of the heat flow, when known

    def __call__(self, X):
        return self.fn(np.asarray(X, dtype=np.float64))

    @property
    def is_constant(self):
        return self.name == "constant"

    def spec(self):
        return {"name": self.name, "params": self.params}


def _phi_constant(d, c=1.0):
    c = float(c)
    fn = lambda X: np.full(X.shape[0], c)
    return fn, (lambda t, X, rho: fn(X))


def _phi_linear(d, c=1.0):
    coef = _vector_param(c, d, "linear")
    fn = lambda X: X @ coef
    return fn, (lambda t, X, rho: X @ coef)


def _phi_sqnorm(d):
    fn = lambda X: np.einsum("ij,ij->i", X, X)
    return fn, (lambda t, X, rho: np.einsum("ij,ij->i", X, X) + 2.0 * rho * t * d)


def _phi_exp_inner(d, c=1.0):
    coef = _vector_param(c, d, "exp_inner")
    c2 = float(coef @ coef)
    fn = lambda X: np.exp(X @ coef)
    return fn, (lambda t, X, rho: np.exp(X @ coef + rho * t * c2))


def _phi_expr(d, expr):
    return compile_expr(expr, d), None


PHI_CATALOG = {
    "constant": (_phi_constant, {"c": "number (default 1.0)"},
                 "phi(x) = c"),
    "linear": (_phi_linear, {"c": "number or length-d list (default 1.0)"},
               "phi(x) = sum_i c_i x_i"),
    "sqnorm": (_phi_sqnorm, {}, "phi(x) = |x|^2"),
    "exp_inner": (_phi_exp_inner, {"c": "number or length-d list (default 1.0)"},
                  "phi(x) = exp(<c, x>)"),
    "expr": (_phi_expr, {"expr": "expression tree (required)"},
             "composed expression of coordinates"),
}


def make_phi(name, d, params=None):
    params = dict(params or {})
    try:
        builder = PHI_CATALOG[name][0]
    except KeyError:
        raise ConfigError(f"unknown initial condition {name!r}") from None
    try:
        fn, heat = builder(d, **params)
    except TypeError as exc:
        raise ConfigError(f"phi {name!r}: bad parameters {sorted(params)}: {exc}") from None
    return InitialCondition(name, params, d, fn, heat)


# ----------------------------------------------------------------- nonlinearities

@dataclass
class Nonlinearity:
    name: str
    params: dict
    fn: object
    lipschitz: float
    linear_rate: float = None  # lambda when f(u) = lambda * u

    def __call__(self, u):
        return self.fn(np.asarray(u, dtype=np.float64))

    @property
    def is_zero(self):
        return self.name == "zero" or self.linear_rate == 0.0

    def spec(self):
        return {"name": self.name, "params": self.params}


def _f_zero():
    return (lambda u: np.zeros_like(u)), 0.0, 0.0


def _f_linear(lam=1.0):
    lam = float(lam)
    return (lambda u: lam * u), abs(lam), lam


def _f_sine(amp=1.0, freq=1.0):
    amp, freq = float(amp), float(freq)
    return (lambda u: amp * np.sin(freq * u)), abs(amp * freq), None


def _f_cubic_clipped(r=1.0):
    r = float(r)
    if not r > 0:
        raise ConfigError("cubic_clipped: r must be > 0")

    def fn(u):
        v = np.clip(u, -r, r)
        return v - v ** 3
    return fn, max(1.0, 3.0 * r * r - 1.0), None


def _f_expr(expr, lipschitz):
    lipschitz = float(lipschitz)
    if not lipschitz > 0:
        raise ConfigError("expr nonlinearity: declared Lipschitz constant must be > 0")
    return compile_expr(expr, allow_var=True), lipschitz, None


F_CATALOG = {
    "zero": (_f_zero, {}, "f(u) = 0"),
    "linear": (_f_linear, {"lam": "number (default 1.0)"}, "f(u) = lam * u"),
    "sine": (_f_sine, {"amp": "number (default 1.0)", "freq": "number (default 1.0)"},
             "f(u) = amp * sin(freq * u)"),
    "cubic_clipped": (_f_cubic_clipped, {"r": "positive number (default 1.0)"},
                      "f(u) = v - v^3, v = clip(u, -r, r)"),
    "expr": (_f_expr, {"expr": "expression tree in 'var' (required)",
                       "lipschitz": "positive number (required)"},
             "composed expression with declared Lipschitz constant"),
}


def make_f(name, params=None):
    params = dict(params or {})
    try:
        builder = F_CATALOG[name][0]
    except KeyError:
        raise ConfigError(f"unknown nonlinearity {name!r}") from None
    try:
        fn, lip, rate = builder(**params)
    except TypeError as exc:
        raise ConfigError(f"f {name!r}: bad parameters {sorted(params)}: {exc}") from None
    return Nonlinearity(name, params, fn, lip, rate)


def list_catalog():
    """Deterministic text listing of both registries."""
    lines = ["phi:"]
    for name in sorted(PHI_CATALOG):
        _, schema, doc = PHI_CATALOG[name]
        lines.append(f"  {name:<14} {doc}")
        lines.extend(f"      {k}: {v}" for k, v in sorted(schema.items()))
    lines.append("f:")
    for name in sorted(F_CATALOG):
        _, schema, doc = F_CATALOG[name]
        lines.append(f"  {name:<14} {doc}")
        lines.extend(f"      {k}: {v}" for k, v in sorted(schema.items()))
    return "\n".join(lines)


# example parameters that make every entry constructible; used by the CLI tests
CATALOG_EXAMPLES = {
    "phi": {
        "constant": {"c": 2.0},
        "linear": {"c": 1.0},
        "sqnorm": {},
        "exp_inner": {"c": 0.3},
        "expr": {"expr": {"op": "max", "args": [{"op": "coord", "index": 0},
                                                {"op": "const", "value": 0.5}]}},
    },
    "f": {
        "zero": {},
        "linear": {"lam": 1.0},
        "sine": {"amp": 0.5},
        "cubic_clipped": {"r": 1.0},
        "expr": {"expr": {"op": "sin", "arg": {"op": "var"}}, "lipschitz": 1.0},
    },
}
