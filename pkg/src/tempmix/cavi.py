"""Tempered coordinate-ascent variational Bayes for finite mixtures.

One sweep updates, in order, the responsibilities, the Dirichlet weight
factor and the K component factors.  Each step is the exact minimiser of
the responsibility-augmented objective in its own block, so the surrogate
ELBO never decreases.  With ``alpha = 1`` this is ordinary CAVI.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .divergences import MCEstimate
from .mixture import (
    ComponentFamily,
    ConfigurationError,
    Dataset,
    GaussianUnknownVar,
    MixtureParams,
    Multinomial,
    component_log_densities,
    log_likelihood,
    seed_sequence,
)
from .special import DomainError
from .variational import (
    DirichletFactors,
    DirichletPrior,
    FactorizedPrior,
    GaussianFactors,
    GaussianMeanPrior,
    NIGFactors,
    NIGPrior,
    NormalIGFactors,
    PriorSpec,
    VariationalState,
    check_factor_family,
    expected_log_component_densities,
    expected_log_weights,
    kl_state_to_prior,
)

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("random", "kmeans", "prior")


class DegenerateObservationError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"observation {row} has zero density under every component")
        self.row = row


class NumericalInvariantError(RuntimeError):
    """An invariant the algorithm guarantees was violated numerically."""


@dataclass(frozen=True)
class FitConfig:
    alpha: float = 1.0
    max_sweeps: int = 500
    rel_tol: float = 1e-8
    restarts: int = 1
    init: str = "random"
    seed: int | None = 0
    threads: int = 1
    # re-evaluate the objective after every block update, not only per sweep
    check_each_update: bool = False
    monotone_slack: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be > 0")
        if self.restarts < 1 or self.max_sweeps < 1:
            raise DomainError("restarts and max_sweeps must be >= 1")
        if self.init not in INIT_STRATEGIES:
            raise DomainError(f"init must be one of {INIT_STRATEGIES}, got {self.init!r}")


@dataclass
class FitResult:
    state: VariationalState
    elbo_trace: list
    surrogate_elbo: float
    sweeps: int
    converged: bool
    restart: int = 0
    restart_elbos: list = field(default_factory=list)
    exact_elbo_mc: MCEstimate | None = None

    def to_dict(self) -> dict:
        mc = None
        if self.exact_elbo_mc is not None:
            mc = {"estimate": self.exact_elbo_mc.estimate, "std_error": self.exact_elbo_mc.std_error}
        return {
            "state": self.state.to_dict(),
            "elbo_trace": list(self.elbo_trace),
            "L_K_surrogate": self.surrogate_elbo,
            "L_K_mc": mc,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "restart": self.restart,
            "restart_elbos": list(self.restart_elbos),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        mc = d.get("L_K_mc")
        return cls(
            state=VariationalState.from_dict(d["state"]),
            elbo_trace=list(d["elbo_trace"]),
            surrogate_elbo=d["L_K_surrogate"],
            sweeps=d["sweeps"],
            converged=d["converged"],
            restart=d.get("restart", 0),
            restart_elbos=list(d.get("restart_elbos", [])),
            exact_elbo_mc=None if mc is None else MCEstimate(mc["estimate"], mc["std_error"]),
        )


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------


def _log_scores(state: VariationalState, data: Dataset, family: ComponentFamily, constant: bool = True) -> np.ndarray:
    return expected_log_weights(state.weight_factor) + expected_log_component_densities(
        state.component_factors, data.observations, family, constant
    )


def update_responsibilities(state: VariationalState, data: Dataset, family: ComponentFamily) -> np.ndarray:
    """omega_ij proportional to exp(E log p_j + E log q_{theta_j}(X_i)).

    The tempering exponent cancels in this block and does not appear.
    """
    if data.n == 0:
        return np.zeros((0, state.K))
    scores = _log_scores(state, data, family, constant=False)
    norm = logsumexp(scores, axis=1, keepdims=True)
    bad = ~np.isfinite(norm[:, 0])
    if bad.any():
        raise DegenerateObservationError(int(np.flatnonzero(bad)[0]))
    return np.exp(scores - norm)


def update_weight_factor(state: VariationalState, prior: PriorSpec, alpha: float) -> np.ndarray:
    """phi_j = alpha_j + alpha * sum_i omega_ij."""
    return np.asarray(prior.weight_prior) + alpha * state.responsibilities.sum(axis=0)


def _stats(resp, x, alpha):
    w = alpha * resp
    mass = w.sum(axis=0)
    s1 = w.T @ x
    return w, mass, s1


def _update_all(state: VariationalState, data: Dataset, prior: PriorSpec, family: ComponentFamily, alpha: float):
    cp = prior.component_prior
    factors = state.component_factors
    resp = state.responsibilities
    if isinstance(cp, DirichletPrior):
        V = len(cp.beta)
        onehot = np.zeros((data.n, V))
        onehot[np.arange(data.n), data.observations - 1] = 1.0
        counts = (alpha * resp).T @ onehot
        return DirichletFactors(np.asarray(cp.beta) + counts)
    x = np.asarray(data.observations, dtype=float)
    w, mass, s1 = _stats(resp, x, alpha)
    if isinstance(cp, GaussianMeanPrior):
        v2 = family.component_variance
        precision = 1.0 / cp.variance + mass / v2
        return GaussianFactors((s1 / v2) / precision, 1.0 / precision)
    if isinstance(cp, NIGPrior):
        precision = cp.precision + mass
        loc = (cp.precision * cp.loc + s1) / precision
        safe = np.where(mass > 0, mass, 1.0)
        xbar = np.where(mass > 0, s1 / safe, cp.loc)
        within = (w * (x[:, None] - xbar) ** 2).sum(axis=0)
        between = cp.precision * mass / precision * (xbar - cp.loc) ** 2
        return NIGFactors(loc, precision, cp.shape + 0.5 * mass, cp.scale + 0.5 * (within + between))
    if isinstance(cp, FactorizedPrior):
        inv_var = factors.shape / factors.scale
        precision = 1.0 / cp.mean_variance + mass * inv_var
        mean = s1 * inv_var / precision
        var = 1.0 / precision
        spread = (w * (x[:, None] - mean) ** 2).sum(axis=0) + mass * var
        return NormalIGFactors(mean, var, cp.shape + 0.5 * mass, cp.scale + 0.5 * spread)
    raise ConfigurationError(f"unsupported prior {type(cp).__name__}")


def update_component_factors(
    state: VariationalState, data: Dataset, prior: PriorSpec, family: ComponentFamily, alpha: float
):
    """Exact tempered conjugate update of every component factor."""
    prior.check_family(family)
    return _update_all(state, data, prior, family, alpha)


def update_component_factor(
    state: VariationalState, data: Dataset, prior: PriorSpec, family: ComponentFamily, alpha: float, j: int
):
    """Update factor j only; the other K - 1 factors are returned unchanged."""
    new = update_component_factors(state, data, prior, family, alpha)
    old = state.component_factors
    merged = {}
    for key, val in vars(old).items():
        arr = val.copy()
        arr[j] = getattr(new, key)[j]
        merged[key] = arr
    return replace(old, **merged)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def surrogate_elbo(
    state: VariationalState, data: Dataset, prior: PriorSpec, family: ComponentFamily, alpha: float
) -> float:
    """Negated value of the responsibility-augmented objective."""
    kl = kl_state_to_prior(state, prior)
    if data.n == 0:
        return -kl
    resp = state.responsibilities
    scores = _log_scores(state, data, family)
    pos = resp > 0
    fit_term = np.sum(resp[pos] * scores[pos])
    entropy = -np.sum(resp[pos] * np.log(resp[pos]))
    return float(alpha * (fit_term + entropy) - kl)


def sample_parameters(state: VariationalState, family: ComponentFamily, rng: np.random.Generator) -> MixtureParams:
    """One draw of the mixture parameters from the variational distribution."""
    weights = _dirichlet(rng, state.weight_factor)
    f = state.component_factors
    if isinstance(f, DirichletFactors):
        probs = np.vstack([_dirichlet(rng, row) for row in f.gamma])
        return MixtureParams(family, weights, probs=probs)
    if isinstance(f, GaussianFactors):
        return MixtureParams(family, weights, means=f.mean + np.sqrt(f.var) * rng.standard_normal(f.K))
    if isinstance(f, NIGFactors):
        var = f.scale / rng.standard_gamma(f.shape)
        means = f.loc + np.sqrt(var / f.precision) * rng.standard_normal(f.K)
        return MixtureParams(family, weights, means=means, variances=var)
    var = f.scale / rng.standard_gamma(f.shape)
    means = f.mean + np.sqrt(f.var) * rng.standard_normal(f.K)
    return MixtureParams(family, weights, means=means, variances=var)


def _dirichlet(rng, conc):
    g = rng.standard_gamma(conc)
    total = g.sum()
    if total == 0.0:
        g = (conc == conc.max()).astype(float)
        total = g.sum()
    w = g / total
    return w / w.sum()


def exact_elbo_mc(
    state: VariationalState,
    data: Dataset,
    prior: PriorSpec,
    family: ComponentFamily,
    alpha: float,
    n_samples: int = 1000,
    seed=0,
) -> MCEstimate:
    """alpha * E_rho[log-likelihood] - KL(rho || prior), by Monte Carlo."""
    kl = kl_state_to_prior(state, prior)
    if data.n == 0:
        return MCEstimate(-kl, 0.0)
    rng = np.random.default_rng(seed)
    lls = np.array([log_likelihood(sample_parameters(state, family, rng), data) for _ in range(n_samples)])
    se = alpha * lls.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else math.inf
    return MCEstimate(float(alpha * lls.mean() - kl), float(se))


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def posterior_mean_params(state: VariationalState, family: ComponentFamily) -> MixtureParams:
    """Point estimate: variational means of weights and component parameters.

    For unknown variances the inverse-gamma mean is used when it exists
    (shape > 1) and the mode otherwise.
    """
    weights = state.weight_factor / state.weight_factor.sum()
    f = state.component_factors
    if isinstance(f, DirichletFactors):
        return MixtureParams(family, weights, probs=f.gamma / f.gamma.sum(axis=1, keepdims=True))
    if isinstance(f, GaussianFactors):
        return MixtureParams(family, weights, means=f.mean)
    var = np.where(f.shape > 1, f.scale / np.maximum(f.shape - 1, 1e-300), f.scale / (f.shape + 1))
    means = f.loc if isinstance(f, NIGFactors) else f.mean
    return MixtureParams(family, weights, means=means, variances=var)


def predictive_mixture(state: VariationalState, family: ComponentFamily) -> MixtureParams:
    """Mixture obtained by averaging P_theta over the variational law.

    Exact for multinomial and known-variance families (each component's
    mean-uncertainty widens its variance); for unknown variances it falls
    back to :func:`posterior_mean_params`.
    """
    weights = state.weight_factor / state.weight_factor.sum()
    f = state.component_factors
    if isinstance(f, GaussianFactors):
        fam = GaussianUnknownVar()
        return MixtureParams(fam, weights, means=f.mean, variances=family.component_variance + f.var)
    return posterior_mean_params(state, family)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def initial_responsibilities(
    data: Dataset, prior: PriorSpec, family: ComponentFamily, strategy: str, rng: np.random.Generator
) -> np.ndarray:
    K, n = prior.K, data.n
    if strategy == "kmeans" and not isinstance(family, Multinomial):
        x = np.asarray(data.observations, dtype=float)
        centers = np.quantile(x, (np.arange(K) + 0.5) / K)
        nearest = np.argmin(np.abs(x[:, None] - centers), axis=1)
        resp = np.zeros((n, K))
        resp[np.arange(n), nearest] = 1.0
        return resp
    if strategy == "prior":
        draw = _draw_from_prior(prior, family, rng)
        with np.errstate(divide="ignore"):
            scores = np.log(draw.weights) + component_log_densities(draw, data.observations)
        norm = logsumexp(scores, axis=1, keepdims=True)
        resp = np.exp(scores - norm)
        # rows where the drawn mixture has no mass fall back to uniform
        resp[~np.isfinite(norm[:, 0])] = 1.0 / K
        return resp
    return rng.dirichlet(np.ones(K), size=n)


def _draw_from_prior(prior: PriorSpec, family: ComponentFamily, rng) -> MixtureParams:
    K = prior.K
    weights = _dirichlet(rng, np.asarray(prior.weight_prior))
    cp = prior.component_prior
    if isinstance(cp, DirichletPrior):
        return MixtureParams(family, weights, probs=np.vstack([_dirichlet(rng, np.asarray(cp.beta)) for _ in range(K)]))
    if isinstance(cp, GaussianMeanPrior):
        return MixtureParams(family, weights, means=math.sqrt(cp.variance) * rng.standard_normal(K))
    var = cp.scale / rng.standard_gamma(np.full(K, cp.shape))
    if isinstance(cp, NIGPrior):
        means = cp.loc + np.sqrt(var / cp.precision) * rng.standard_normal(K)
    else:
        means = math.sqrt(cp.mean_variance) * rng.standard_normal(K)
    return MixtureParams(family, weights, means=means, variances=var)


def _check_step(before, after, what, slack):
    if after < before - slack * max(abs(before), 1.0):
        raise NumericalInvariantError(f"surrogate ELBO decreased during {what}: {before!r} -> {after!r}")


def sweep(state: VariationalState, data: Dataset, prior: PriorSpec, family: ComponentFamily, config: FitConfig):
    """One pass of block updates, in place.  Returns the new surrogate ELBO."""
    alpha = config.alpha
    checking = config.check_each_update
    if checking:
        current = surrogate_elbo(state, data, prior, family, alpha)
    state.responsibilities = update_responsibilities(state, data, family)
    if checking:
        nxt = surrogate_elbo(state, data, prior, family, alpha)
        _check_step(current, nxt, "responsibility update", config.monotone_slack)
        current = nxt
    state.weight_factor = update_weight_factor(state, prior, alpha)
    if checking:
        nxt = surrogate_elbo(state, data, prior, family, alpha)
        _check_step(current, nxt, "weight-factor update", config.monotone_slack)
        current = nxt
    state.component_factors = update_component_factors(state, data, prior, family, alpha)
    value = surrogate_elbo(state, data, prior, family, alpha)
    if checking:
        _check_step(current, value, "component-factor update", config.monotone_slack)
    return value


def _fit_once(data, prior, family, config: FitConfig, seed_seq, restart: int) -> FitResult:
    rng = np.random.default_rng(seed_seq)
    state = VariationalState.from_prior(prior, data.n)
    state.responsibilities = initial_responsibilities(data, prior, family, config.init, rng)
    state.weight_factor = update_weight_factor(state, prior, config.alpha)
    state.component_factors = update_component_factors(state, data, prior, family, config.alpha)
    previous = surrogate_elbo(state, data, prior, family, config.alpha)
    trace = []
    converged = False
    for _ in range(config.max_sweeps):
        value = sweep(state, data, prior, family, config)
        _check_step(previous, value, "sweep", config.monotone_slack)
        trace.append(value)
        if abs(value - previous) <= config.rel_tol * max(abs(previous), 1e-300):
            converged = True
            break
        previous = value
    if not converged:
        log.info("restart %d stopped after %d sweeps without meeting rel_tol", restart, len(trace))
    return FitResult(state, trace, trace[-1], len(trace), converged, restart)


def fit(data: Dataset, prior: PriorSpec, family: ComponentFamily, config: FitConfig = FitConfig()) -> FitResult:
    """Run tempered CAVI with ``config.restarts`` seeded restarts.

    The restart with the largest final surrogate ELBO wins; ties go to the
    lowest restart index.
    """
    prior.check_family(family)
    if isinstance(family, Multinomial) != data.is_categorical:
        raise ConfigurationError(f"dataset kind does not match family {family}")
    if data.is_categorical and data.category_count != family.category_count:
        raise ConfigurationError("dataset V differs from family category count")
    if prior.outside_theory_range:
        log.warning("weight prior %s lies outside [2/K, 1]", prior.weight_prior)

    if data.n == 0:
        state = VariationalState.from_prior(prior, 0)
        check_factor_family(state.component_factors, family)
        return FitResult(state, [0.0], 0.0, 0, True, 0, [0.0])

    seeds = seed_sequence(config.seed).spawn(config.restarts)
    if config.threads > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda r: _fit_once(data, prior, family, config, seeds[r], r), range(config.restarts)))
    else:
        results = [_fit_once(data, prior, family, config, seeds[r], r) for r in range(config.restarts)]
    finals = [r.surrogate_elbo for r in results]
    best = int(np.argmax(finals))
    winner = results[best]
    winner.restart_elbos = finals
    return winner


def fit_all_restarts(data, prior, family, config: FitConfig = FitConfig()) -> list:
    """Every restart's result, in restart order (used by the benchmark)."""
    prior.check_family(family)
    seeds = seed_sequence(config.seed).spawn(config.restarts)
    return [_fit_once(data, prior, family, config, seeds[r], r) for r in range(config.restarts)]
