"""Problem definitions: the linear heat PDE du/dt = rho * Laplace(u) and its
semilinear variant du/dt = Laplace(u) + f(u), both with u(0, .) = phi."""
import hashlib
import json
import math
from dataclasses import dataclass

from kspl.catalog import InitialCondition, Nonlinearity, make_f, make_phi
from kspl.errors import ConfigError
from kspl.sampling import CubeDomain


@dataclass
class HeatProblem:
    d: int
    T: float
    rho: float
    domain: CubeDomain
    phi: InitialCondition

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not (self.T > 0 and self.rho > 0):
            raise ConfigError("T and rho must be positive")
        if self.domain.d != self.d or self.phi.d != self.d:
            raise ConfigError("domain / phi dimension does not match d")
        if not math.isfinite(self.varrho):
            raise ConfigError("sqrt(2 rho T) is not finite")

    @property
    def varrho(self):
        """Standard deviation of the heat kernel at time T: sqrt(2 rho T)."""
        return math.sqrt(2.0 * self.rho * self.T)

    def spec(self):
        return {"d": self.d, "T": self.T, "rho": self.rho,
                "domain": [self.domain.a, self.domain.b], "phi": self.phi.spec()}

    def fingerprint(self):
        blob = json.dumps(self.spec(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SemilinearProblem:
    base: HeatProblem
    f: Nonlinearity

    def __post_init__(self):
        if self.base.rho != 1.0:
            raise ConfigError("semilinear problems use the plain Laplacian (rho = 1)")
        if self.f.lipschitz < 0:
            raise ConfigError("declared Lipschitz constant must be >= 0")

    @property
    def d(self):
        return self.base.d

    @property
    def T(self):
        return self.base.T

    @property
    def phi(self):
        return self.base.phi

    @property
    def domain(self):
        return self.base.domain

    def spec(self):
        return {**self.base.spec(), "f": self.f.spec()}

    def fingerprint(self):
        blob = json.dumps(self.spec(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def heat_problem(d, T, phi="sqnorm", phi_params=None, rho=1.0, a=0.0, b=1.0):
    return HeatProblem(d, float(T), float(rho), CubeDomain(float(a), float(b), d),
                       make_phi(phi, d, phi_params))


def semilinear_problem(d, T, phi="sqnorm", f="linear", phi_params=None, f_params=None,
                       a=0.0, b=1.0):
    return SemilinearProblem(heat_problem(d, T, phi, phi_params, 1.0, a, b),
                             make_f(f, f_params))
