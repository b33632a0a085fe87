"""Simulation harness: parameter-recovery study against EM, and the
empirical divergence-versus-bound experiment.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cavi import FitConfig, fit, fit_all_restarts, posterior_mean_params, predictive_mixture, sample_parameters
from .divergences import MCEstimate, renyi_divergence_mc
from .em import EMConfig, em_fit_all
from .mixture import (
    GaussianKnownVar,
    MixtureParams,
    log_mixture_density,
    sample_mixture,
    sample_simplex_dirichlet,
    seed_sequence,
)
from .rates import divergence_bound, rate_gaussian_known_var
from .special import DomainError
from .variational import GaussianMeanPrior, PriorSpec

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "dataset", "restart", "mae_p", "mae_t1", "mae_t2", "mae_t3", "elbo")


@dataclass(frozen=True)
class MAE:
    weights: float
    means: tuple

    @property
    def overall(self) -> float:
        """Average of the weight error and every per-mean error."""
        return (self.weights + sum(self.means)) / (1 + len(self.means))


def _csv_value(v):
    # shortest round-tripping text for floats, numpy scalars included
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def mae(estimated: MixtureParams, truth: MixtureParams) -> MAE:
    """Mean absolute errors after sorting both mixtures by component mean."""
    if estimated.K != truth.K:
        raise DomainError(f"component counts differ: {estimated.K} vs {truth.K}")
    e, t = estimated.sorted_by_mean(), truth.sorted_by_mean()
    return MAE(
        float(np.mean(np.abs(e.weights - t.weights))),
        tuple(float(v) for v in np.abs(e.means - t.means)),
    )


@dataclass(frozen=True)
class BenchProtocol:
    n_datasets: int = 10
    n_samples: int = 1000
    K: int = 3
    truth_weight_concentration: float = 2.0 / 3.0
    # true means ~ N(0, spread^2); set spread_is_variance to read it as a variance
    truth_mean_spread: float = 10.0
    spread_is_variance: bool = False
    runs_per_dataset: int = 5
    alphas: tuple = (0.5, 1.0)
    vb_weight_concentration: float = 1.0
    vb_prior_variance: float = 10.0
    init: str = "random"
    max_sweeps: int = 500
    rel_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.n_datasets, self.n_samples, self.K, self.runs_per_dataset) < 1:
            raise DomainError("protocol counts must be positive")
        if any(not 0 < a <= 1 for a in self.alphas):
            raise DomainError("alphas must lie in (0, 1]")


@dataclass
class MethodSummary:
    mae_p_mean: float
    mae_p_sd: float
    mae_means_mean: list
    mae_means_sd: list


@dataclass
class BenchReport:
    protocol: dict
    summary: dict  # method -> MethodSummary, lowest-MAE run per dataset
    summary_by_objective: dict  # method -> MethodSummary, best-objective run
    rows: list  # one dict per (method, dataset, restart)
    truths: list
    environment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "summary": {k: asdict(v) for k, v in self.summary.items()},
            "summary_by_objective": {k: asdict(v) for k, v in self.summary_by_objective.items()},
            "truths": self.truths,
            "rows": self.rows,
            "environment": self.environment,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _csv_value(v) for k, v in row.items()})
        return buf.getvalue()


def draw_truth(protocol: BenchProtocol, seed) -> MixtureParams:
    ss = seed_sequence(seed)
    w_seed, m_seed = ss.spawn(2)
    weights = sample_simplex_dirichlet([protocol.truth_weight_concentration] * protocol.K, w_seed)
    sd = math.sqrt(protocol.truth_mean_spread) if protocol.spread_is_variance else protocol.truth_mean_spread
    means = sd * np.random.default_rng(m_seed).standard_normal(protocol.K)
    return MixtureParams(GaussianKnownVar(1.0), weights, means=means)


def _method_name(alpha):
    return f"VB(alpha={alpha:g})"


def _summarise(per_dataset: list, K: int) -> MethodSummary:
    p = np.array([m.weights for m in per_dataset])
    means = np.array([m.means for m in per_dataset]).reshape(len(per_dataset), K)
    ddof = 1 if len(per_dataset) > 1 else 0
    return MethodSummary(
        float(p.mean()),
        float(p.std(ddof=ddof)),
        means.mean(axis=0).tolist(),
        means.std(axis=0, ddof=ddof).tolist(),
    )


def _bench_dataset(protocol: BenchProtocol, d: int, ds_seed, methods, prior, family):
    truth_seed, data_seed, *method_seeds = ds_seed.spawn(2 + len(methods))
    truth = draw_truth(protocol, truth_seed)
    data = sample_mixture(truth, protocol.n_samples, data_seed)
    if np.min(truth.weights) * protocol.n_samples < 5:
        log.info("dataset %d: a component carries fewer than 5 expected points", d)
    runs = {}
    for alpha, mseed in zip(protocol.alphas, method_seeds):
        cfg = FitConfig(
            alpha=alpha,
            max_sweeps=protocol.max_sweeps,
            rel_tol=protocol.rel_tol,
            restarts=protocol.runs_per_dataset,
            init=protocol.init,
            seed=mseed,
        )
        runs[_method_name(alpha)] = [
            (posterior_mean_params(r.state, family), r.surrogate_elbo) for r in fit_all_restarts(data, prior, family, cfg)
        ]
    em_cfg = EMConfig(
        max_iters=protocol.max_sweeps,
        rel_tol=protocol.rel_tol,
        restarts=protocol.runs_per_dataset,
        seed=method_seeds[-1],
        init=protocol.init,
    )
    runs["EM"] = [(s.params, s.loglik) for s in em_fit_all(data, protocol.K, 1.0, em_cfg)]
    rows, best_mae, best_obj = [], {}, {}
    for method in methods:
        scored = []
        for r, (est, objective) in enumerate(runs[method]):
            err = mae(est, truth)
            scored.append((err, objective))
            padded = list(err.means) + [math.nan] * (3 - len(err.means))
            rows.append(
                {
                    "method": method,
                    "dataset": d,
                    "restart": r,
                    "mae_p": err.weights,
                    "mae_t1": padded[0],
                    "mae_t2": padded[1],
                    "mae_t3": padded[2],
                    "elbo": objective,
                    "mae_means": list(err.means),
                }
            )
        best_mae[method] = min((s[0] for s in scored), key=lambda m: m.overall)
        best_obj[method] = max(scored, key=lambda s: s[1])[0]
    truth_record = {"weights": truth.weights.tolist(), "means": truth.means.tolist()}
    return truth_record, rows, best_mae, best_obj


def run_supplement_bench(protocol: BenchProtocol = BenchProtocol(), threads: int = 1) -> BenchReport:
    """Simulate, fit VB at each alpha and EM, and aggregate parameter errors.

    Per dataset the run with the lowest overall MAE is kept, which needs the
    truth; the run with the best objective (ELBO or log-likelihood) is
    summarised separately.  Every dataset owns its seed, so the report does
    not depend on ``threads``.
    """
    family = GaussianKnownVar(1.0)
    prior = PriorSpec.symmetric(
        protocol.K, GaussianMeanPrior(protocol.vb_prior_variance), protocol.vb_weight_concentration
    )
    methods = [_method_name(a) for a in protocol.alphas] + ["EM"]
    seeds = seed_sequence(protocol.seed).spawn(protocol.n_datasets)

    def task(d):
        return _bench_dataset(protocol, d, seeds[d], methods, prior, family)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(protocol.n_datasets)))
    else:
        results = [task(d) for d in range(protocol.n_datasets)]
    rows = [row for _, rs, _, _ in results for row in rs]
    return BenchReport(
        protocol=asdict(protocol),
        summary={m: _summarise([r[2][m] for r in results], protocol.K) for m in methods},
        summary_by_objective={m: _summarise([r[3][m] for r in results], protocol.K) for m in methods},
        rows=rows,
        truths=[r[0] for r in results],
        environment={"python": platform.python_version(), "numpy": np.__version__, "seed": protocol.seed},
    )


# ---------------------------------------------------------------------------
# Divergence versus bound
# ---------------------------------------------------------------------------

DIVERGENCE_COLUMNS = ("n", "seed", "divergence", "std_error", "rate", "bound", "below_bound")


def default_truth(K: int = 2) -> MixtureParams:
    """Equal weights, unit variances, means 6 apart and centred at zero."""
    means = 6.0 * (np.arange(K) - (K - 1) / 2.0)
    return MixtureParams(GaussianKnownVar(1.0), np.full(K, 1.0 / K), means=means)


def mixture_renyi_mc(fitted: MixtureParams, truth: MixtureParams, alpha: float, n_samples: int, seed) -> MCEstimate:
    """D_alpha(fitted, truth) estimated from draws of the fitted mixture."""

    def sampler(rng, m):
        return sample_mixture(fitted, m, rng).observations

    return renyi_divergence_mc(
        lambda x: log_mixture_density(fitted, x),
        lambda x: log_mixture_density(truth, x),
        sampler,
        alpha,
        n_samples,
        seed,
    )


def sampled_renyi_mc(state, family, truth, alpha, n_draws, n_samples, seed) -> MCEstimate:
    """Average of D_alpha(P_theta, truth) over theta drawn from the fit."""
    rng = np.random.default_rng(seed)
    per_draw = max(2, n_samples // n_draws)
    vals = np.array(
        [mixture_renyi_mc(sample_parameters(state, family, rng), truth, alpha, per_draw, rng).estimate for _ in range(n_draws)]
    )
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_draws)))


def run_divergence_experiment(
    n_grid,
    K: int = 2,
    alpha: float = 0.5,
    mc_samples: int = 20000,
    seed: int = 0,
    n_seeds: int = 1,
    truth: MixtureParams | None = None,
    prior_variance: float = 100.0,
    restarts: int = 3,
    mode: str = "predictive",
    theta_draws: int = 50,
) -> list:
    """Fit well-specified known-variance data at each n and compare the
    Monte-Carlo Renyi divergence to the theoretical bound.

    ``mode="predictive"`` uses the variational predictive mixture;
    ``mode="sampled"`` averages over parameter draws (slower).
    """
    if not 0 < alpha < 1:
        raise DomainError("the bound needs alpha in (0, 1)")
    if mode not in ("predictive", "sampled"):
        raise DomainError(f"unknown mode {mode!r}")
    truth = truth if truth is not None else default_truth(K)
    family = GaussianKnownVar(1.0)
    prior = PriorSpec.symmetric(truth.K, GaussianMeanPrior(prior_variance))
    rows = []
    for n, n_seed in zip(n_grid, seed_sequence(seed).spawn(len(n_grid))):
        rate = rate_gaussian_known_var(int(n), truth.K, 1.0, prior_variance, truth.means.tolist())
        bound = divergence_bound(truth.K, rate, alpha)
        for s, rep_seed in enumerate(n_seed.spawn(n_seeds)):
            data_seed, fit_seed, mc_seed = rep_seed.spawn(3)
            data = sample_mixture(truth, int(n), data_seed)
            result = fit(data, prior, family, FitConfig(alpha=alpha, restarts=restarts, seed=fit_seed))
            if mode == "predictive":
                est = mixture_renyi_mc(predictive_mixture(result.state, family), truth, alpha, mc_samples, mc_seed)
            else:
                est = sampled_renyi_mc(result.state, family, truth, alpha, theta_draws, mc_samples, mc_seed)
            rows.append(
                {
                    "n": int(n),
                    "seed": s,
                    "divergence": est.estimate,
                    "std_error": est.std_error,
                    "rate": rate,
                    "bound": bound,
                    "below_bound": bool(est.estimate <= bound),
                }
            )
    return rows


def divergence_rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=DIVERGENCE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_value(v) for k, v in row.items()})
    return buf.getvalue()
