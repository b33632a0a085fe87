"""Priors, mean-field variational factors and their expected log terms.

Component factors are stored column-wise: one object holds the parameters
of all K factors as arrays, so the coordinate updates stay vectorised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .divergences import (
    DirichletParams,
    GaussianParams,
    InverseGammaParams,
    NIGParams,
    kl_dirichlet,
    kl_dirichlet_rows,
    kl_gaussian,
    kl_inverse_gamma,
    kl_nig,
)
from .mixture import (
    LOG_2PI,
    ComponentFamily,
    ConfigurationError,
    GaussianKnownVar,
    GaussianUnknownVar,
    Multinomial,
)
from .special import DomainError, digamma

VARIANCE_FLOOR = 1e-12


def _positive(arr, what):
    arr = np.asarray(arr, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{what} must be > 0")
    return arr


# ---------------------------------------------------------------------------
# Component priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletPrior:
    """Dir(beta_1..beta_V) on each multinomial component."""

    beta: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(_positive(np.atleast_1d(self.beta), "beta").tolist()))


@dataclass(frozen=True)
class GaussianMeanPrior:
    """N(0, variance) on each component mean (known component variance)."""

    variance: float

    def __post_init__(self):
        _positive(self.variance, "prior variance")


@dataclass(frozen=True)
class NIGPrior:
    """mu | s2 ~ N(loc, s2 / precision), s2 ~ IG(shape, scale)."""

    loc: float
    precision: float
    shape: float
    scale: float

    def __post_init__(self):
        _positive([self.precision, self.shape, self.scale], "NIG prior parameters")

    @classmethod
    def from_variances(cls, prior_variance: float, gamma2: float) -> "NIGPrior":
        """NIG(0, 1/prior_variance, 1, gamma2)."""
        return cls(0.0, 1.0 / prior_variance, 1.0, gamma2)

    def params(self) -> NIGParams:
        return NIGParams(self.loc, self.precision, self.shape, self.scale)


@dataclass(frozen=True)
class FactorizedPrior:
    """N(0, mean_variance) on the mean times IG(shape, scale) on the variance."""

    mean_variance: float
    shape: float
    scale: float

    def __post_init__(self):
        _positive([self.mean_variance, self.shape, self.scale], "factorized prior parameters")

    @classmethod
    def from_variances(cls, prior_variance: float, gamma2: float) -> "FactorizedPrior":
        return cls(prior_variance, 1.0, gamma2)


@dataclass(frozen=True)
class PriorSpec:
    weight_prior: tuple
    component_prior: DirichletPrior | GaussianMeanPrior | NIGPrior | FactorizedPrior

    def __post_init__(self):
        object.__setattr__(
            self, "weight_prior", tuple(_positive(np.atleast_1d(self.weight_prior), "weight prior").tolist())
        )

    @property
    def K(self) -> int:
        return len(self.weight_prior)

    @property
    def outside_theory_range(self) -> bool:
        """True when some weight concentration falls outside [2/K, 1].

        With K = 1 the weight is degenerate and the condition is vacuous.
        """
        K = self.K
        if K == 1:
            return False
        return any(not (2.0 / K <= a <= 1.0) for a in self.weight_prior)

    def check_family(self, family: ComponentFamily) -> None:
        cp = self.component_prior
        ok = (
            (isinstance(family, Multinomial) and isinstance(cp, DirichletPrior) and len(cp.beta) == family.category_count)
            or (isinstance(family, GaussianKnownVar) and isinstance(cp, GaussianMeanPrior))
            or (isinstance(family, GaussianUnknownVar) and isinstance(cp, (NIGPrior, FactorizedPrior)))
        )
        if not ok:
            raise ConfigurationError(f"prior {type(cp).__name__} does not fit family {family}")

    @classmethod
    def symmetric(cls, K: int, component_prior, concentration: float = 1.0) -> "PriorSpec":
        return cls((concentration,) * K, component_prior)

    def to_dict(self) -> dict:
        cp = self.component_prior
        if isinstance(cp, DirichletPrior):
            comp = {"type": "dirichlet", "beta": list(cp.beta)}
        elif isinstance(cp, GaussianMeanPrior):
            comp = {"type": "gaussian_mean", "variance": cp.variance}
        elif isinstance(cp, NIGPrior):
            comp = {"type": "nig", "loc": cp.loc, "precision": cp.precision, "shape": cp.shape, "scale": cp.scale}
        else:
            comp = {"type": "factorized", "mean_variance": cp.mean_variance, "shape": cp.shape, "scale": cp.scale}
        return {"weight_prior": list(self.weight_prior), "component_prior": comp}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        comp = dict(d["component_prior"])
        kind = comp.pop("type")
        builders = {
            "dirichlet": lambda c: DirichletPrior(tuple(c["beta"])),
            "gaussian_mean": lambda c: GaussianMeanPrior(c["variance"]),
            "nig": lambda c: NIGPrior(**c),
            "factorized": lambda c: FactorizedPrior(**c),
        }
        if kind not in builders:
            raise ConfigurationError(f"unknown component prior type {kind!r}")
        return cls(tuple(d["weight_prior"]), builders[kind](comp))


# ---------------------------------------------------------------------------
# Variational factors
# ---------------------------------------------------------------------------


@dataclass
class DirichletFactors:
    gamma: np.ndarray  # (K, V)

    def __post_init__(self):
        self.gamma = _positive(np.atleast_2d(self.gamma), "gamma")

    @property
    def K(self):
        return self.gamma.shape[0]


@dataclass
class GaussianFactors:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.var = _positive(np.maximum(np.asarray(self.var, dtype=float).reshape(-1), VARIANCE_FLOOR), "var")

    @property
    def K(self):
        return self.mean.size


@dataclass
class NIGFactors:
    loc: np.ndarray
    precision: np.ndarray
    shape: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.loc = np.asarray(self.loc, dtype=float).reshape(-1)
        self.precision = _positive(np.asarray(self.precision, dtype=float).reshape(-1), "precision")
        self.shape = _positive(np.asarray(self.shape, dtype=float).reshape(-1), "shape")
        self.scale = _positive(np.asarray(self.scale, dtype=float).reshape(-1), "scale")

    @property
    def K(self):
        return self.loc.size


@dataclass
class NormalIGFactors:
    """N(mean, var) on the component mean times IG(shape, scale) on its variance."""

    mean: np.ndarray
    var: np.ndarray
    shape: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.var = _positive(np.maximum(np.asarray(self.var, dtype=float).reshape(-1), VARIANCE_FLOOR), "var")
        self.shape = _positive(np.asarray(self.shape, dtype=float).reshape(-1), "shape")
        self.scale = _positive(np.asarray(self.scale, dtype=float).reshape(-1), "scale")

    @property
    def K(self):
        return self.mean.size


ComponentFactors = DirichletFactors | GaussianFactors | NIGFactors | NormalIGFactors

_FACTOR_TYPES = {
    "dirichlet": DirichletFactors,
    "gaussian": GaussianFactors,
    "nig": NIGFactors,
    "normal_ig": NormalIGFactors,
}


def _factor_to_dict(f: ComponentFactors) -> dict:
    name = next(k for k, v in _FACTOR_TYPES.items() if isinstance(f, v))
    out = {"type": name}
    for key, val in vars(f).items():
        out[key] = val.tolist()
    return out


def _factor_from_dict(d: dict) -> ComponentFactors:
    d = dict(d)
    cls = _FACTOR_TYPES[d.pop("type")]
    return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


def prior_factors(prior: PriorSpec) -> ComponentFactors:
    """Component factors equal to the prior, for all K components."""
    K = prior.K
    cp = prior.component_prior
    if isinstance(cp, DirichletPrior):
        return DirichletFactors(np.tile(np.asarray(cp.beta), (K, 1)))
    if isinstance(cp, GaussianMeanPrior):
        return GaussianFactors(np.zeros(K), np.full(K, cp.variance))
    if isinstance(cp, NIGPrior):
        return NIGFactors(np.full(K, cp.loc), np.full(K, cp.precision), np.full(K, cp.shape), np.full(K, cp.scale))
    return NormalIGFactors(np.zeros(K), np.full(K, cp.mean_variance), np.full(K, cp.shape), np.full(K, cp.scale))


@dataclass
class VariationalState:
    weight_factor: np.ndarray  # Dirichlet concentrations phi
    component_factors: ComponentFactors
    responsibilities: np.ndarray  # (n, K), rows on the simplex

    def __post_init__(self):
        self.weight_factor = _positive(np.asarray(self.weight_factor, dtype=float).reshape(-1), "weight factor")
        K = self.weight_factor.size
        self.responsibilities = np.asarray(self.responsibilities, dtype=float).reshape(-1, K)
        if self.component_factors.K != K:
            raise ConfigurationError("weight factor and component factors disagree on K")

    @property
    def K(self) -> int:
        return self.weight_factor.size

    def copy(self) -> "VariationalState":
        cf = replace(self.component_factors, **{k: v.copy() for k, v in vars(self.component_factors).items()})
        return VariationalState(self.weight_factor.copy(), cf, self.responsibilities.copy())

    def to_dict(self) -> dict:
        return {
            "weight_factor": self.weight_factor.tolist(),
            "component_factors": _factor_to_dict(self.component_factors),
            "responsibilities": self.responsibilities.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariationalState":
        phi = np.asarray(d["weight_factor"], dtype=float)
        resp = np.asarray(d["responsibilities"], dtype=float).reshape(-1, phi.size)
        return cls(phi, _factor_from_dict(d["component_factors"]), resp)

    @classmethod
    def from_prior(cls, prior: PriorSpec, n: int = 0) -> "VariationalState":
        K = prior.K
        return cls(np.asarray(prior.weight_prior), prior_factors(prior), np.full((n, K), 1.0 / K))


def check_factor_family(factors: ComponentFactors, family: ComponentFamily) -> None:
    ok = (
        (isinstance(family, Multinomial) and isinstance(factors, DirichletFactors)
         and factors.gamma.shape[1] == family.category_count)
        or (isinstance(family, GaussianKnownVar) and isinstance(factors, GaussianFactors))
        or (isinstance(family, GaussianUnknownVar) and isinstance(factors, (NIGFactors, NormalIGFactors)))
    )
    if not ok:
        raise ConfigurationError(f"{type(factors).__name__} does not match family {family}")


# ---------------------------------------------------------------------------
# Expected log terms
# ---------------------------------------------------------------------------


def expected_log_weights(weight_factor) -> np.ndarray:
    """E[log p_j] under Dir(phi), for all j."""
    phi = np.asarray(weight_factor, dtype=float)
    return digamma(phi) - digamma(phi.sum())


def expected_log_weight(weight_factor, j: int) -> float:
    return float(expected_log_weights(weight_factor)[j])


def expected_log_component_densities(
    factors: ComponentFactors, x, family: ComponentFamily, constant: bool = True
) -> np.ndarray:
    """E[log q_{theta_j}(x_i)] under each factor, as an (n, K) array.

    With ``constant=False`` the terms shared by every component (the
    Gaussian normalising constant) are left out; responsibilities do not
    depend on them.
    """
    check_factor_family(factors, family)
    x = np.atleast_1d(x)
    if isinstance(factors, DirichletFactors):
        g = factors.gamma
        elog = digamma(g) - digamma(g.sum(axis=1))[:, None]
        return elog[:, np.asarray(x, dtype=np.int64) - 1].T
    x = np.asarray(x, dtype=float)[:, None]
    if isinstance(factors, GaussianFactors):
        v2 = family.component_variance
        kernel = -(factors.var + (factors.mean - x) ** 2) / (2.0 * v2)
        return kernel - 0.5 * (LOG_2PI + math.log(v2)) if constant else kernel
    inv_var = factors.shape / factors.scale
    elog_var = np.log(factors.scale) - digamma(factors.shape)
    if isinstance(factors, NIGFactors):
        quad = (x - factors.loc) ** 2 * inv_var + 1.0 / factors.precision
    else:
        quad = ((x - factors.mean) ** 2 + factors.var) * inv_var
    return -0.5 * ((LOG_2PI if constant else 0.0) + elog_var) - 0.5 * quad


def expected_log_component_density(factors: ComponentFactors, x, family: ComponentFamily, j: int | None = None):
    out = expected_log_component_densities(factors, x, family)
    if j is not None:
        out = out[:, j]
    return float(out[0]) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# KL to prior
# ---------------------------------------------------------------------------


def component_kls(factors: ComponentFactors, prior: PriorSpec) -> np.ndarray:
    """KL(rho_j || pi_j) for each component."""
    cp = prior.component_prior
    if isinstance(factors, DirichletFactors) and isinstance(cp, DirichletPrior):
        return kl_dirichlet_rows(factors.gamma, cp.beta)
    out = np.empty(factors.K)
    for j in range(factors.K):
        if isinstance(factors, GaussianFactors) and isinstance(cp, GaussianMeanPrior):
            out[j] = kl_gaussian(GaussianParams(factors.mean[j], factors.var[j]), GaussianParams(0.0, cp.variance))
        elif isinstance(factors, NIGFactors) and isinstance(cp, NIGPrior):
            out[j] = kl_nig(
                NIGParams(factors.loc[j], factors.precision[j], factors.shape[j], factors.scale[j]), cp.params()
            )
        elif isinstance(factors, NormalIGFactors) and isinstance(cp, FactorizedPrior):
            out[j] = kl_gaussian(
                GaussianParams(factors.mean[j], factors.var[j]), GaussianParams(0.0, cp.mean_variance)
            ) + kl_inverse_gamma(
                InverseGammaParams(factors.shape[j], factors.scale[j]), InverseGammaParams(cp.shape, cp.scale)
            )
        else:
            raise ConfigurationError(f"{type(factors).__name__} cannot be compared with {type(cp).__name__}")
    return out


def kl_state_to_prior(state: VariationalState, prior: PriorSpec) -> float:
    if state.K != prior.K:
        raise ConfigurationError(f"state has K={state.K} but prior has K={prior.K}")
    weight_kl = kl_dirichlet(DirichletParams(state.weight_factor), DirichletParams(prior.weight_prior))
    return weight_kl + float(np.sum(component_kls(state.component_factors, prior)))
