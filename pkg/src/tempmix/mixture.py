"""Finite mixtures of multinomial or univariate Gaussian components.

Categorical observations are 1-based integers in ``1..V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .divergences import GaussianParams, kl_categorical, kl_gaussian
from .special import DomainError

LOG_2PI = math.log(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Raised when families, priors or factors do not fit together."""


class DatasetParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# Component families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Multinomial:
    category_count: int
    name = "multinomial"

    def __post_init__(self):
        if self.category_count < 2:
            raise DomainError(f"category_count must be >= 2, got {self.category_count}")


@dataclass(frozen=True)
class GaussianKnownVar:
    component_variance: float = 1.0
    name = "gauss-known"

    def __post_init__(self):
        if not self.component_variance > 0:
            raise DomainError("component_variance must be > 0")


@dataclass(frozen=True)
class GaussianUnknownVar:
    name = "gauss-unknown"


ComponentFamily = Union[Multinomial, GaussianKnownVar, GaussianUnknownVar]


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """n observations tagged with their kind.

    ``category_count`` is None for real-valued data.
    """

    observations: np.ndarray
    category_count: int | None = None

    def __post_init__(self):
        if self.category_count is None:
            obs = np.asarray(self.observations, dtype=float).reshape(-1)
        else:
            obs = np.asarray(self.observations).reshape(-1)
            if obs.size and not np.all(np.equal(np.mod(obs, 1), 0)):
                raise DomainError("categorical observations must be integers")
            obs = obs.astype(np.int64)
            if obs.size and (obs.min() < 1 or obs.max() > self.category_count):
                raise DomainError(f"categorical observations must lie in 1..{self.category_count}")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return int(self.observations.size)

    @property
    def is_categorical(self) -> bool:
        return self.category_count is not None

    def __len__(self):
        return self.n

    def header(self) -> str:
        if self.is_categorical:
            return f"kind=categorical,V={self.category_count}"
        return "kind=real"

    def to_csv(self) -> str:
        lines = [self.header()]
        if self.is_categorical:
            lines.extend(str(int(v)) for v in self.observations)
        else:
            lines.extend(f"{v:.17g}" for v in self.observations)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        lines = text.splitlines()
        if not lines or not lines[0].strip():
            raise DatasetParseError(1, "missing header line")
        header = lines[0].strip()
        fields = dict(part.split("=", 1) for part in header.split(",") if "=" in part)
        kind = fields.get("kind")
        if kind == "real":
            values = []
            for lineno, raw in enumerate(lines[1:], start=2):
                s = raw.strip()
                if not s:
                    continue
                try:
                    v = float(s)
                except ValueError:
                    raise DatasetParseError(lineno, f"not a real number: {s!r}") from None
                if not math.isfinite(v):
                    raise DatasetParseError(lineno, f"non-finite value: {s!r}")
                values.append(v)
            return cls(np.array(values, dtype=float))
        if kind == "categorical":
            try:
                V = int(fields["V"])
            except (KeyError, ValueError):
                raise DatasetParseError(1, f"categorical header needs V=<int>: {header!r}") from None
            if V < 2:
                raise DatasetParseError(1, f"V must be >= 2, got {V}")
            values = []
            for lineno, raw in enumerate(lines[1:], start=2):
                s = raw.strip()
                if not s:
                    continue
                try:
                    v = int(s)
                except ValueError:
                    raise DatasetParseError(lineno, f"not an integer: {s!r}") from None
                if not 1 <= v <= V:
                    raise DatasetParseError(lineno, f"category {v} outside 1..{V}")
                values.append(v)
            return cls(np.array(values, dtype=np.int64), category_count=V)
        raise DatasetParseError(1, f"unknown header {header!r}")

    @classmethod
    def read(cls, path) -> "Dataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(fh.read())

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureParams:
    """Weights plus K component parameters.

    Multinomial components live in ``probs`` (K x V); Gaussian components
    in ``means`` and, for unknown variance, ``variances``.
    """

    family: ComponentFamily
    weights: np.ndarray
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    probs: np.ndarray | None = None
    K: int = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size < 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must lie on the simplex, got {w}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "K", w.size)
        fam = self.family
        if isinstance(fam, Multinomial):
            probs = np.asarray(self.probs, dtype=float)
            if probs.shape != (w.size, fam.category_count):
                raise ConfigurationError(f"probs must have shape {(w.size, fam.category_count)}")
            if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-12):
                raise DomainError("each component's probs must lie on the simplex")
            object.__setattr__(self, "probs", probs)
        else:
            means = np.asarray(self.means, dtype=float).reshape(-1)
            if means.size != w.size:
                raise ConfigurationError("need one mean per component")
            object.__setattr__(self, "means", means)
            if isinstance(fam, GaussianUnknownVar):
                var = np.asarray(self.variances, dtype=float).reshape(-1)
                if var.size != w.size or np.any(var <= 0):
                    raise DomainError("need one positive variance per component")
            else:
                var = np.full(w.size, fam.component_variance)
            object.__setattr__(self, "variances", var)

    def sorted_by_mean(self) -> "MixtureParams":
        order = np.argsort(self.means, kind="stable")
        return MixtureParams(
            self.family,
            self.weights[order],
            means=self.means[order],
            variances=self.variances[order],
        )


def _check_compatible(family: ComponentFamily, x) -> np.ndarray:
    if isinstance(family, Multinomial):
        arr = np.asarray(x)
        if arr.dtype.kind not in "iu" and not np.all(np.equal(np.mod(arr, 1), 0)):
            raise TypeError("multinomial family needs integer observations")
        arr = arr.astype(np.int64)
        if arr.size and (arr.min() < 1 or arr.max() > family.category_count):
            raise TypeError(f"observation outside 1..{family.category_count}")
        return arr
    return np.asarray(x, dtype=float)


def component_log_densities(params: MixtureParams, x) -> np.ndarray:
    """log q_{theta_j}(x_i) as an (n, K) array."""
    x = np.atleast_1d(_check_compatible(params.family, x))
    if isinstance(params.family, Multinomial):
        with np.errstate(divide="ignore"):
            return np.log(params.probs[:, x - 1].T)
    var = params.variances
    return -0.5 * (LOG_2PI + np.log(var)) - (x[:, None] - params.means) ** 2 / (2.0 * var)


def log_mixture_density(params: MixtureParams, x):
    """log sum_j p_j q_{theta_j}(x); -inf where the mixture has no mass."""
    scalar = np.ndim(x) == 0
    with np.errstate(divide="ignore"):
        terms = np.log(params.weights) + component_log_densities(params, x)
    out = logsumexp(terms, axis=1)
    return float(out[0]) if scalar else out


def log_likelihood(params: MixtureParams, data: Dataset) -> float:
    if data.n == 0:
        return 0.0
    return float(np.sum(log_mixture_density(params, data.observations)))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_simplex_dirichlet(concentration, seed) -> np.ndarray:
    """One Dirichlet draw built from normalised Gamma variates."""
    conc = np.asarray(concentration, dtype=float).reshape(-1)
    if conc.size < 1 or np.any(conc <= 0):
        raise DomainError("Dirichlet concentrations must be > 0")
    rng = np.random.default_rng(seed)
    g = rng.standard_gamma(conc)
    total = g.sum()
    if total == 0.0:
        # every gamma variate underflowed; mass goes to the largest concentration
        g = (conc == conc.max()).astype(float)
        total = g.sum()
    return g / total


def sample_mixture(params: MixtureParams, n: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    fam = params.family
    labels = rng.choice(params.K, size=n, p=params.weights)
    if isinstance(fam, Multinomial):
        u = rng.random(n)
        cdf = np.cumsum(params.probs, axis=1)[labels]
        cats = np.minimum((u[:, None] >= cdf).sum(axis=1), fam.category_count - 1)
        return Dataset(cats + 1, category_count=fam.category_count)
    z = rng.standard_normal(n)
    return Dataset(params.means[labels] + np.sqrt(params.variances[labels]) * z)


def sample_mixture_labels(params: MixtureParams, n: int, seed):
    """Like :func:`sample_mixture` for Gaussians but also returns labels."""
    rng = np.random.default_rng(seed)
    labels = rng.choice(params.K, size=n, p=params.weights)
    z = rng.standard_normal(n)
    return Dataset(params.means[labels] + np.sqrt(params.variances[labels]) * z), labels


# ---------------------------------------------------------------------------
# KL bound between two mixtures
# ---------------------------------------------------------------------------


def mixture_kl_upper_bound(params0: MixtureParams, params: MixtureParams) -> float:
    """Weight KL plus weighted component KLs; dominates KL(P0 || P)."""
    if params0.family != params.family:
        raise ConfigurationError(f"family mismatch: {params0.family} vs {params.family}")
    if params0.K != params.K:
        raise ConfigurationError(f"component count mismatch: {params0.K} vs {params.K}")
    total = kl_categorical(params0.weights, params.weights)
    for j in range(params0.K):
        if params0.weights[j] == 0.0:
            continue
        if isinstance(params0.family, Multinomial):
            comp = kl_categorical(params0.probs[j], params.probs[j])
        else:
            comp = kl_gaussian(
                GaussianParams(params0.means[j], params0.variances[j]),
                GaussianParams(params.means[j], params.variances[j]),
            )
        total += params0.weights[j] * comp
    return total
