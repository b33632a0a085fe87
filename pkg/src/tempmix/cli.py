"""Command-line interface: ``tempmix <subcommand> [flags]``.

Exit codes: 0 success, 2 input error, 3 numerical invariant violation,
4 internal error.  ``MIX_SEED`` in the environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench, rates
from .cavi import FitConfig, NumericalInvariantError, exact_elbo_mc, fit
from .divergences import MCEstimate
from .mixture import (
    ConfigurationError,
    Dataset,
    DatasetParseError,
    GaussianKnownVar,
    GaussianUnknownVar,
    MixtureParams,
    Multinomial,
    sample_mixture,
)
from .selection import model_weights_from_name, penalised_scores, select_k
from .special import DomainError
from .variational import DirichletPrior, FactorizedPrior, GaussianMeanPrior, NIGPrior, PriorSpec

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4
FAMILIES = ("multinomial", "gauss-known", "gauss-nig", "gauss-factorized")

log = logging.getLogger("tempmix")


class InputError(ValueError):
    """Bad flags or input files; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _floats(text: str | None, what: str):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict, pretty=None) -> None:
    if args.pretty and pretty is not None:
        _emit(args, pretty(payload))
    else:
        _emit(args, json.dumps(_clean(payload), indent=2) + "\n")


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def _read_data(args, family_name: str) -> Dataset:
    try:
        with open(args.data, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {args.data}: {exc.strerror}") from None
    if not text.strip():
        # an empty file is an empty dataset of the requested kind
        if family_name == "multinomial":
            if args.categories is None:
                raise InputError("empty multinomial data needs --categories")
            return Dataset(np.zeros(0, dtype=np.int64), category_count=args.categories)
        return Dataset(np.zeros(0))
    return Dataset.from_csv(text)


def build_family(name: str, data: Dataset | None, args):
    if name == "multinomial":
        V = data.category_count if data is not None and data.is_categorical else args.categories
        if V is None:
            raise InputError("multinomial family needs categorical data or --categories")
        return Multinomial(V)
    if name == "gauss-known":
        return GaussianKnownVar(args.component_variance)
    if name in ("gauss-nig", "gauss-factorized"):
        return GaussianUnknownVar()
    raise InputError(f"unknown family {name!r}")


def build_prior(name: str, K: int, family, args) -> PriorSpec:
    if name == "multinomial":
        cp = DirichletPrior((args.prior_beta,) * family.category_count)
    elif name == "gauss-known":
        cp = GaussianMeanPrior(args.prior_v2)
    elif name == "gauss-nig":
        cp = NIGPrior.from_variances(args.prior_v2, args.prior_gamma2)
    else:
        cp = FactorizedPrior.from_variances(args.prior_v2, args.prior_gamma2)
    return PriorSpec.symmetric(K, cp, args.weight_concentration)


def _fit_config(args) -> FitConfig:
    return FitConfig(
        alpha=args.alpha,
        max_sweeps=args.max_sweeps,
        rel_tol=args.tol,
        restarts=args.restarts,
        init=args.init,
        seed=args.seed,
        threads=args.threads,
    )


def _check_family_matches(name: str, data: Dataset) -> None:
    if (name == "multinomial") != data.is_categorical:
        raise InputError(f"family {name} does not match a {'categorical' if data.is_categorical else 'real'} dataset")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = _read_data(args, args.family)
    _check_family_matches(args.family, data)
    if args.k < 1:
        raise InputError("--k must be >= 1")
    family = build_family(args.family, data, args)
    prior = build_prior(args.family, args.k, family, args)
    result = fit(data, prior, family, _fit_config(args))
    if args.mc_samples > 0:
        est, se = exact_elbo_mc(result.state, data, prior, family, args.alpha, args.mc_samples, seed=args.seed)
        result.exact_elbo_mc = MCEstimate(est, se)
    payload = {"family": args.family, "K": args.k, "alpha": args.alpha, "prior": prior.to_dict(), **result.to_dict()}

    def pretty(p):
        st = p["state"]
        phi = np.asarray(st["weight_factor"], dtype=float)
        rows = [[j + 1, float(phi[j] / phi.sum())] for j in range(len(phi))]
        head = f"L(K) = {p['L_K_surrogate']:.10g}  sweeps = {p['sweeps']}  converged = {p['converged']}\n"
        return head + _table(["component", "E[p_j]"], rows)

    _emit_json(args, payload, pretty)
    return EXIT_OK


def _load_scores(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        return {int(k): float(v) for k, v in raw.items()}
    except (AttributeError, ValueError):
        raise InputError(f"{path}: expected an object mapping K to L(K)") from None


def cmd_select(args) -> int:
    if args.kmax < 1:
        raise InputError("--kmax must be >= 1")
    weights = model_weights_from_name(args.model_weights, args.kmax)
    if args.scores:
        result = penalised_scores(_load_scores(args.scores), weights)
    else:
        if not args.data:
            raise InputError("select needs --data or --scores")
        data = _read_data(args, args.family)
        _check_family_matches(args.family, data)
        family = build_family(args.family, data, args)
        result = select_k(
            data,
            lambda K: build_prior(args.family, K, family, args),
            family,
            range(1, args.kmax + 1),
            weights,
            replace(_fit_config(args), threads=1),
            threads=args.threads,
        )
    payload = {"model_weights": args.model_weights, "kmax": args.kmax, **result.to_dict(include_fits=False)}

    def pretty(p):
        rows = [[k, p["elbos"][k], p["penalties"][k], p["scores"][k]] for k in p["scores"]]
        return f"selected K = {p['selected_k']}\n" + _table(["K", "L(K)", "penalty", "score"], rows)

    _emit_json(args, payload, pretty)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.n < 0:
        raise InputError("--n must be >= 0")
    family = build_family(args.family, None, args)
    weights = _floats(args.weights, "--weights")
    if isinstance(family, Multinomial):
        if args.probs is None:
            raise InputError("multinomial simulation needs --probs")
        probs = [_floats(row, "--probs") for row in args.probs.split(";")]
        weights = weights or [1.0 / len(probs)] * len(probs)
        params = MixtureParams(family, weights, probs=probs)
    else:
        means = _floats(args.means, "--means")
        if means is None:
            default = bench.default_truth(args.k)
            means, weights = default.means.tolist(), weights or default.weights.tolist()
        weights = weights or [1.0 / len(means)] * len(means)
        variances = _floats(args.variances, "--variances") or [1.0] * len(means)
        params = MixtureParams(family, weights, means=means, variances=variances)
    _emit(args, sample_mixture(params, args.n, args.seed).to_csv())
    return EXIT_OK


def cmd_bench(args) -> int:
    protocol = bench.BenchProtocol(
        n_datasets=args.datasets,
        n_samples=args.samples,
        K=args.k,
        truth_mean_spread=args.mean_spread,
        spread_is_variance=args.spread_is_variance,
        runs_per_dataset=args.restarts,
        init=args.init,
        max_sweeps=args.max_sweeps,
        rel_tol=args.tol,
        seed=args.seed,
    )
    report = bench.run_supplement_bench(protocol, threads=args.threads)
    if args.format == "csv":
        _emit(args, report.to_csv())
        return EXIT_OK

    def pretty(p):
        out = []
        for title, key in (("lowest-MAE restart", "summary"), ("best-objective restart", "summary_by_objective")):
            rows = []
            for m, s in p[key].items():
                means = [f"{a:.3f} ({b:.3f})" for a, b in zip(s["mae_means_mean"], s["mae_means_sd"])]
                rows.append([m, f"{s['mae_p_mean']:.3f} ({s['mae_p_sd']:.3f})", *means])
            out.append(title + "\n" + _table(["method", "p", *[f"theta_{j + 1}" for j in range(args.k)]], rows))
        return "\n".join(out)

    _emit_json(args, report.to_dict(), pretty)
    return EXIT_OK


def cmd_rates(args) -> int:
    inputs = {}
    fam = args.family
    if fam == "multinomial":
        if args.categories is None:
            raise InputError("multinomial rate needs --categories")
        inputs["V"] = args.categories
    elif fam in ("gauss-known", "gauss-nig", "gauss-factorized"):
        means = _floats(args.means, "--means") or [0.0] * args.k
        inputs["prior_variance"] = args.prior_v2
        inputs["true_means"] = means
        if fam == "gauss-known":
            inputs["component_variance"] = args.component_variance
        else:
            inputs["gamma2"] = args.prior_gamma2
            inputs["true_variances"] = _floats(args.variances, "--variances") or [1.0] * len(means)
    elif fam == "misspecified":
        inputs["prior_variance"] = args.prior_v2
        inputs["L"] = args.L
    if args.sweep:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "r_nk", "bound", "dirichlet_term"])
        for n in _floats(args.sweep, "--sweep"):
            rep = rates.rate_report(fam, int(n), args.k, args.alpha, **inputs)
            writer.writerow([rep.n, repr(rep.r_nk), "" if rep.bound is None else repr(rep.bound), repr(rep.dirichlet_term)])
        _emit(args, buf.getvalue())
        return EXIT_OK
    if args.n is None:
        raise InputError("rates needs --n or --sweep")
    report = rates.rate_report(fam, args.n, args.k, args.alpha, **inputs)

    def pretty(p):
        rows = [[k, p[k]] for k in ("family", "n", "K", "alpha", "r_nk", "dirichlet_term", "bound")]
        return _table(["quantity", "value"], rows)

    _emit_json(args, report.to_dict(), pretty)
    return EXIT_OK


def cmd_divergence(args) -> int:
    grid = [int(v) for v in _floats(args.n_grid, "--n-grid")]
    if not grid or min(grid) < 1:
        raise InputError("--n-grid needs positive sample sizes")
    rows = bench.run_divergence_experiment(
        grid,
        K=args.k,
        alpha=args.alpha,
        mc_samples=args.mc_samples,
        seed=args.seed,
        n_seeds=args.seeds,
        prior_variance=args.prior_v2,
        restarts=args.restarts,
        mode=args.mode,
    )
    if args.format == "csv":
        _emit(args, bench.divergence_rows_to_csv(rows))
        return EXIT_OK
    _emit_json(args, {"rows": rows}, lambda p: _table(bench.DIVERGENCE_COLUMNS, [list(r.values()) for r in p["rows"]]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=1.0, help="tempering exponent in (0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8, help="relative ELBO tolerance")
    p.add_argument("--max-sweeps", type=int, default=500)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--init", choices=("random", "kmeans", "prior"), default="random")
    p.add_argument("--output", help="write here instead of stdout")
    p.add_argument("--pretty", action="store_true", help="human-readable table instead of JSON")
    p.add_argument("--k", type=int, default=2, help="number of components")
    p.add_argument("--categories", type=int, help="V for multinomial data")
    p.add_argument("--component-variance", type=float, default=1.0)
    p.add_argument("--prior-v2", type=float, default=10.0, help="prior variance on component means")
    p.add_argument("--prior-gamma2", type=float, default=1.0, help="inverse-gamma scale hyperparameter")
    p.add_argument("--prior-beta", type=float, default=1.0, help="Dirichlet concentration on category probs")
    p.add_argument("--weight-concentration", type=float, default=1.0, help="Dirichlet concentration on weights")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempmix", description="Tempered variational Bayes for finite mixtures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one K and write the FitResult JSON")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES, default="gauss-known")
    p.add_argument("--mc-samples", type=int, default=0, help="also estimate the exact ELBO by Monte Carlo")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="choose K by penalised ELBO")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--family", choices=FAMILIES, default="gauss-known")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--model-weights", choices=("geometric", "uniform"), default="geometric")
    p.add_argument("--scores", help="JSON object of precomputed L(K); skips fitting")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="draw a dataset from a mixture and write CSV")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", choices=FAMILIES, default="gauss-known")
    p.add_argument("--weights", help="comma-separated mixture weights")
    p.add_argument("--means", help="comma-separated component means")
    p.add_argument("--variances", help="comma-separated component variances")
    p.add_argument("--probs", help="category probabilities, rows separated by ';'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="parameter-recovery benchmark against EM")
    _common(p)
    p.add_argument("--datasets", type=int, default=10)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--mean-spread", type=float, default=10.0, help="spread of the true means")
    p.add_argument(
        "--spread-is-variance",
        action="store_true",
        help="read --mean-spread as a variance rather than a standard deviation",
    )
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_bench, k=3)

    p = sub.add_parser("rates", help="evaluate r_{n,K} and the divergence bound")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--sweep", help="comma-separated n values; emits a CSV sweep instead of JSON")
    p.add_argument(
        "--family",
        choices=("dirichlet", "multinomial", "gauss-known", "gauss-nig", "gauss-factorized", "misspecified"),
        default="dirichlet",
    )
    p.add_argument("--means", help="true component means")
    p.add_argument("--variances", help="true component variances")
    p.add_argument("--L", type=float, default=1.0, help="mean bound for the misspecified family")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("divergence", help="Monte Carlo divergence against the bound over an n grid")
    _common(p)
    p.add_argument("--n-grid", default="100,1000,10000")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--mc-samples", type=int, default=20000)
    p.add_argument("--mode", choices=("predictive", "sampled"), default="predictive")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_divergence, alpha=0.5, prior_v2=100.0, restarts=3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    env_seed = os.environ.get("MIX_SEED")
    if env_seed is not None and env_seed.strip():
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"error: MIX_SEED must be an integer, got {env_seed!r}", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except DatasetParseError as exc:
        print(f"error: {args.data}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalInvariantError as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DomainError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - stable exit code for anything unexpected
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
