"""Closed-form divergences, a seeded Monte-Carlo Renyi estimator and
quadrature helpers for one-dimensional densities.

Every KL routine returns ``math.inf`` rather than raising when absolute
continuity fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .special import DomainError, digamma, log_gamma


class ShapeError(ValueError):
    """Raised when paired parameter vectors have different lengths."""


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class DirichletParams:
    concentration: tuple

    def __post_init__(self):
        conc = tuple(float(c) for c in np.atleast_1d(self.concentration))
        if len(conc) < 1 or not all(c > 0 for c in conc):
            raise DomainError(f"Dirichlet concentrations must be > 0, got {conc}")
        object.__setattr__(self, "concentration", conc)

    @property
    def dim(self) -> int:
        return len(self.concentration)


@dataclass(frozen=True)
class InverseGammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError(f"inverse-gamma needs shape, scale > 0, got {self}")


@dataclass(frozen=True)
class NIGParams:
    """Normal-Inverse-Gamma: mu | s2 ~ N(loc, s2 / precision), s2 ~ IG(shape, scale)."""

    loc: float
    precision: float
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.precision > 0 and self.shape > 0 and self.scale > 0):
            raise DomainError(f"NIG needs precision, shape, scale > 0, got {self}")


def kl_gaussian(u: GaussianParams, v: GaussianParams) -> float:
    """KL(N(u.mean, u.variance) || N(v.mean, v.variance))."""
    ratio = u.variance / v.variance
    return 0.5 * (ratio - 1.0 - math.log(ratio)) + (v.mean - u.mean) ** 2 / (2.0 * v.variance)


def kl_dirichlet(a: DirichletParams, b: DirichletParams) -> float:
    """KL(Dir(a) || Dir(b))."""
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ca = np.asarray(a.concentration)
    cb = np.asarray(b.concentration)
    sa = ca.sum()
    out = (
        log_gamma(sa)
        - log_gamma(cb.sum())
        - np.sum(log_gamma(ca))
        + np.sum(log_gamma(cb))
        + np.dot(ca - cb, digamma(ca) - digamma(sa))
    )
    return float(out)


def kl_dirichlet_rows(a, b) -> np.ndarray:
    """KL(Dir(a_j) || Dir(b)) for every row a_j of a (K, V) array."""
    ca = np.atleast_2d(np.asarray(a, dtype=float))
    cb = np.asarray(b, dtype=float)
    if ca.shape[1] != cb.size:
        raise ShapeError(f"dimension mismatch: {ca.shape[1]} vs {cb.size}")
    sa = ca.sum(axis=1)
    return (
        log_gamma(sa)
        - log_gamma(cb.sum())
        - log_gamma(ca).sum(axis=1)
        + log_gamma(cb).sum()
        + np.sum((ca - cb) * (digamma(ca) - digamma(sa)[:, None]), axis=1)
    )


def kl_inverse_gamma(p: InverseGammaParams, q: InverseGammaParams) -> float:
    """KL(IG(p.shape, p.scale) || IG(q.shape, q.scale))."""
    a1, b1, a2, b2 = p.shape, p.scale, q.shape, q.scale
    return (
        (a1 - a2) * digamma(a1)
        + log_gamma(a2)
        - log_gamma(a1)
        + a2 * math.log(b1 / b2)
        + a1 * (b2 - b1) / b1
    )


def nig_conditional_term(p: NIGParams, q: NIGParams) -> float:
    """Expected KL between the conditional Gaussians of two NIG laws,
    averaged over the variance marginal of ``p``."""
    r = p.precision / q.precision
    return (
        0.5 * math.log(r)
        + 0.5 / r
        + 0.5 * q.precision * (q.loc - p.loc) ** 2 * p.shape / p.scale
        - 0.5
    )


def kl_nig(p: NIGParams, q: NIGParams) -> float:
    """KL between two Normal-Inverse-Gamma distributions."""
    return nig_conditional_term(p, q) + kl_inverse_gamma(
        InverseGammaParams(p.shape, p.scale), InverseGammaParams(q.shape, q.scale)
    )


def kl_categorical(p0, p) -> float:
    """KL between two probability vectors on a finite set."""
    p0 = np.asarray(p0, dtype=float)
    p = np.asarray(p, dtype=float)
    if p0.shape != p.shape:
        raise ShapeError(f"length mismatch: {p0.shape} vs {p.shape}")
    support = p0 > 0
    if np.any(p[support] <= 0):
        return math.inf
    return float(np.sum(p0[support] * (np.log(p0[support]) - np.log(p[support]))))


# ---------------------------------------------------------------------------
# Renyi divergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float

    def __iter__(self):
        yield self.estimate
        yield self.std_error


def renyi_divergence_mc(
    logdensity_p: Callable[[np.ndarray], np.ndarray],
    logdensity_q: Callable[[np.ndarray], np.ndarray],
    sampler_p: Callable[[np.random.Generator, int], np.ndarray],
    alpha: float,
    n_samples: int,
    seed,
) -> MCEstimate:
    """Monte-Carlo estimate of D_alpha(P, Q) from draws of P.

    Uses D_alpha = log E_P[(p/q)^(alpha - 1)] / (alpha - 1).  The standard
    error comes from the delta method on the log of the sample mean.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = np.random.default_rng(seed)
    x = sampler_p(rng, n_samples)
    log_ratio = np.asarray(logdensity_p(x), dtype=float) - np.asarray(logdensity_q(x), dtype=float)
    t = (alpha - 1.0) * log_ratio
    if np.any(np.isposinf(t)):
        return MCEstimate(math.inf, math.nan)
    shift = np.max(t)
    w = np.exp(t - shift)
    mean_w = w.mean()
    log_mean = math.log(mean_w) + shift
    se_w = w.std(ddof=1) / math.sqrt(n_samples)
    return MCEstimate(log_mean / (alpha - 1.0), (se_w / mean_w) / (1.0 - alpha))


def renyi_gaussian(p: GaussianParams, q: GaussianParams, alpha: float) -> float:
    """Closed-form D_alpha(N_p, N_q) for 0 < alpha < 1."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    mixed = alpha * q.variance + (1.0 - alpha) * p.variance
    return (
        0.5 * alpha * (p.mean - q.mean) ** 2 / mixed
        + 0.5 * math.log(q.variance / p.variance)
        + math.log(q.variance / mixed) / (2.0 * (alpha - 1.0))
    )


# ---------------------------------------------------------------------------
# Quadrature on the real line
# ---------------------------------------------------------------------------


def _quad(f, lo, hi, points):
    pts = sorted(x for x in points if lo < x < hi)
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
        total += val
    return total


def kl_quad(logf, logg, lo, hi, points=()):
    """KL(f || g) by adaptive quadrature over [lo, hi]."""

    def integrand(x):
        lf = logf(x)
        if lf == -math.inf:
            return 0.0
        return math.exp(lf) * (lf - logg(x))

    return _quad(integrand, lo, hi, points)


def bhattacharyya_quad(logf, logg, lo, hi, points=(), alpha=0.5):
    """int f^alpha g^(1 - alpha) over [lo, hi]."""
    return _quad(lambda x: math.exp(alpha * logf(x) + (1 - alpha) * logg(x)), lo, hi, points)


def renyi_quad(logf, logg, alpha, lo, hi, points=()):
    return math.log(bhattacharyya_quad(logf, logg, lo, hi, points, alpha)) / (alpha - 1.0)


def hellinger_sq_quad(logf, logg, lo, hi, points=()):
    """Squared Hellinger distance with the 1/2 normalisation."""
    return 0.5 * _quad(
        lambda x: (math.exp(0.5 * logf(x)) - math.exp(0.5 * logg(x))) ** 2, lo, hi, points
    )


def total_variation_quad(logf, logg, lo, hi, points=()):
    return 0.5 * _quad(lambda x: abs(math.exp(logf(x)) - math.exp(logg(x))), lo, hi, points)
