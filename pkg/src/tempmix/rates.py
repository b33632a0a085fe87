"""Convergence-rate calculators for the tempered VB mixture estimators.

Each function returns r_{n,K} exactly as the max of the weight term and
the per-component terms, constants included.  ``prior_variance`` is the
prior variance on component means, ``component_variance`` the known
variance of each Gaussian component and ``gamma2`` the inverse-gamma scale
hyperparameter.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .special import DomainError

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _check(n, K):
    if n < 1 or K < 1:
        raise DomainError(f"need n >= 1 and K >= 1, got n={n}, K={K}")


def rate_dirichlet(n: int, K: int) -> float:
    """4 log(nK) / n for K >= 2; zero contribution when K = 1."""
    _check(n, K)
    if K == 1:
        return 0.0
    return 4.0 * math.log(n * K) / n


def _max_with_weights(n, K, component_terms):
    comp = max(component_terms)
    if K == 1:
        return comp
    return max(rate_dirichlet(n, K), comp)


def rate_multinomial(n: int, K: int, V: int) -> float:
    _check(n, K)
    if V < 2:
        raise DomainError("V must be >= 2")
    comp = 8.0 * K * V * math.log(n * V) / n
    if K == 1:
        return comp
    return max(comp, 8.0 * K * math.log(n * K) / n)


def rate_gaussian_known_var(
    n: int, K: int, component_variance: float, prior_variance: float, true_means: Sequence[float]
) -> float:
    _check(n, K)
    if len(true_means) != K:
        raise DomainError("need one true mean per component")
    v2, pv2 = component_variance, prior_variance
    terms = [
        (0.5 * math.log(n / 2.0) + v2 / (n * pv2) + 0.5 * math.log(pv2 / v2) + mu**2 / (2.0 * pv2) - 0.5) / n
        for mu in true_means
    ]
    return _max_with_weights(n, K, terms)


def rate_gaussian_nig(
    n: int, K: int, prior_variance: float, gamma2: float, true_means: Sequence[float], true_variances: Sequence[float]
) -> float:
    _check(n, K)
    pv2 = prior_variance
    log_n_sqrt_v = math.log(n) + 0.25 * math.log(pv2)
    terms = [
        (
            2.0 * log_n_sqrt_v
            + 1.0 / (2.0 * n * pv2)
            + mu**2 / (2.0 * s2 * pv2)
            + math.log(s2 / gamma2)
            + gamma2 / s2
            - _HALF_LOG_2PI
        )
        / n
        for mu, s2 in zip(true_means, true_variances, strict=True)
    ]
    return _max_with_weights(n, K, terms)


def rate_gaussian_factorized(
    n: int, K: int, prior_variance: float, gamma2: float, true_means: Sequence[float], true_variances: Sequence[float]
) -> float:
    _check(n, K)
    pv2 = prior_variance
    log_n_sqrt_v = math.log(n) + 0.25 * math.log(pv2)
    terms = [
        (
            2.0 * log_n_sqrt_v
            + s2 / (2.0 * n * pv2)
            + mu**2 / (2.0 * pv2)
            + 0.5 * math.log(s2 / gamma2**2)
            + gamma2 / s2
            - _HALF_LOG_2PI
        )
        / n
        for mu, s2 in zip(true_means, true_variances, strict=True)
    ]
    return _max_with_weights(n, K, terms)


def rate_misspecified_gaussian(n: int, K: int, prior_variance: float, L: float) -> float:
    """Rate for unit-variance mixtures whose means are confined to [-L, L]."""
    _check(n, K)
    pv2 = prior_variance
    comp = (0.5 * math.log(n / 2.0) + 1.0 / (n * pv2) + 0.5 * math.log(pv2) + L**2 / (2.0 * pv2) - 0.5) / n
    return _max_with_weights(n, K, [comp])


def divergence_bound(K: int, rate: float, alpha: float) -> float:
    """(1 + alpha) / (1 - alpha) * 2 K r_{n,K}."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    return (1.0 + alpha) / (1.0 - alpha) * 2.0 * K * rate


@dataclass(frozen=True)
class RateReport:
    family: str
    n: int
    K: int
    alpha: float
    r_nk: float
    bound: float | None
    dirichlet_term: float
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def rate_report(family: str, n: int, K: int, alpha: float, **inputs) -> RateReport:
    """Compute the rate for ``family`` and wrap it with the divergence bound.

    ``family`` is one of dirichlet, multinomial, gauss-known, gauss-nig,
    gauss-factorized, misspecified.  The divergence bound is only defined
    for alpha < 1; at alpha = 1 it is reported as None.
    """
    if family == "dirichlet":
        r = rate_dirichlet(n, K)
    elif family == "multinomial":
        r = rate_multinomial(n, K, inputs["V"])
    elif family == "gauss-known":
        r = rate_gaussian_known_var(n, K, inputs["component_variance"], inputs["prior_variance"], inputs["true_means"])
    elif family == "gauss-nig":
        r = rate_gaussian_nig(
            n, K, inputs["prior_variance"], inputs["gamma2"], inputs["true_means"], inputs["true_variances"]
        )
    elif family == "gauss-factorized":
        r = rate_gaussian_factorized(
            n, K, inputs["prior_variance"], inputs["gamma2"], inputs["true_means"], inputs["true_variances"]
        )
    elif family == "misspecified":
        r = rate_misspecified_gaussian(n, K, inputs["prior_variance"], inputs["L"])
    else:
        raise DomainError(f"unknown rate family {family!r}")
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")
    bound = divergence_bound(K, r, alpha) if alpha < 1.0 else None
    return RateReport(family, n, K, alpha, r, bound, rate_dirichlet(n, K), dict(inputs))
