"""EM for univariate Gaussian mixtures with a known common variance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mixture import LOG_2PI, Dataset, GaussianKnownVar, MixtureParams, seed_sequence
from .special import DomainError

log = logging.getLogger(__name__)

EMPTY_MASS = 1e-12


@dataclass(frozen=True)
class EMConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    restarts: int = 1
    seed: int | None = 0
    init: str = "random"


@dataclass
class EMState:
    params: MixtureParams
    loglik_trace: list
    iterations: int
    converged: bool
    reseeds: list = field(default_factory=list)  # (iteration, component) pairs
    restart: int = 0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def _e_step(x, weights, means, v2):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    scores = logw - 0.5 * (LOG_2PI + math.log(v2)) - (x[:, None] - means) ** 2 / (2.0 * v2)
    norm = logsumexp(scores, axis=1, keepdims=True)
    return np.exp(scores - norm), float(norm.sum())


def _initial_resp(x, K, init, rng):
    n = x.size
    if init == "kmeans":
        centers = np.quantile(x, (np.arange(K) + 0.5) / K)
        resp = np.zeros((n, K))
        resp[np.arange(n), np.argmin(np.abs(x[:, None] - centers), axis=1)] = 1.0
        return resp
    if init != "random":
        raise DomainError(f"unknown EM init {init!r}")
    return rng.dirichlet(np.ones(K), size=n)


def _em_once(x, K, v2, config: EMConfig, seed_seq, restart):
    rng = np.random.default_rng(seed_seq)
    resp = _initial_resp(x, K, config.init, rng)
    n = x.size
    reseeds = []
    trace = []
    converged = False
    weights = means = None
    for it in range(config.max_iters):
        mass = resp.sum(axis=0)
        empty = mass < EMPTY_MASS
        safe = np.where(empty, 1.0, mass)
        means = np.where(empty, 0.0, resp.T @ x / safe)
        for j in np.flatnonzero(empty):
            means[j] = x[rng.integers(n)]
            reseeds.append((it, int(j)))
            log.info("EM restart %d: component %d emptied at iteration %d, reseeded", restart, j, it)
        weights = np.maximum(mass, EMPTY_MASS) / np.maximum(mass, EMPTY_MASS).sum()
        resp, ll = _e_step(x, weights, means, v2)
        if trace and abs(ll - trace[-1]) <= config.rel_tol * abs(trace[-1]):
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
    params = MixtureParams(GaussianKnownVar(v2), weights, means=means)
    # the confirming pass that detects convergence changes nothing
    iterations = len(trace) - 1 if converged else len(trace)
    return EMState(params, trace, iterations, converged, reseeds, restart)


def em_fit(data: Dataset, K: int, component_variance: float = 1.0, config: EMConfig = EMConfig()) -> EMState:
    """Maximum-likelihood mixture of K Gaussians sharing a known variance.

    Runs ``config.restarts`` seeded restarts and keeps the one with the
    highest final log-likelihood (lowest index on ties).
    """
    return max(em_fit_all(data, K, component_variance, config), key=lambda s: (s.loglik, -s.restart))


def em_fit_all(data: Dataset, K: int, component_variance: float = 1.0, config: EMConfig = EMConfig()) -> list:
    if data.is_categorical:
        raise DomainError("EM baseline handles real-valued data only")
    if data.n == 0 or K < 1:
        raise DomainError("EM needs n >= 1 and K >= 1")
    x = np.asarray(data.observations, dtype=float)
    seeds = seed_sequence(config.seed).spawn(config.restarts)
    return [_em_once(x, K, component_variance, config, seeds[r], r) for r in range(config.restarts)]
