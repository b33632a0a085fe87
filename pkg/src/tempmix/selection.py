"""Choosing the number of components by a penalised ELBO."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .cavi import FitConfig, fit
from .mixture import ComponentFamily, Dataset, seed_sequence
from .special import DomainError
from .variational import PriorSpec


class SelectionError(RuntimeError):
    def __init__(self, K: int, cause: Exception):
        super().__init__(f"fit with K={K} failed: {cause}")
        self.K = K


@dataclass(frozen=True)
class Geometric:
    """pi_K = 2^-K."""

    def log_weight(self, K: int) -> float:
        return -K * math.log(2.0)


@dataclass(frozen=True)
class UniformUpTo:
    k_max: int

    def log_weight(self, K: int) -> float:
        if not 1 <= K <= self.k_max:
            raise DomainError(f"K={K} outside 1..{self.k_max}")
        return -math.log(self.k_max)


@dataclass(frozen=True)
class Custom:
    weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if any(not 0 < v <= 1 for v in w) or sum(w) > 1 + 1e-12:
            raise DomainError("custom model weights must lie in (0, 1] and sum to at most 1")
        object.__setattr__(self, "weights", w)

    def log_weight(self, K: int) -> float:
        return math.log(self.weights[K - 1])


ModelPriorWeights = Geometric | UniformUpTo | Custom


def model_weights_from_name(name: str, k_max: int) -> ModelPriorWeights:
    if name == "geometric":
        return Geometric()
    if name == "uniform":
        return UniformUpTo(k_max)
    raise DomainError(f"unknown model weights {name!r}")


@dataclass
class SelectionResult:
    elbos: dict
    penalties: dict
    scores: dict
    selected_k: int
    per_k: dict = field(default_factory=dict)

    def to_dict(self, include_fits: bool = True) -> dict:
        out = {
            "selected_k": self.selected_k,
            "elbos": {str(k): v for k, v in self.elbos.items()},
            "penalties": {str(k): v for k, v in self.penalties.items()},
            "scores": {str(k): v for k, v in self.scores.items()},
        }
        if include_fits and self.per_k:
            out["per_k"] = {str(k): r.to_dict() for k, r in self.per_k.items()}
        return out


def penalised_scores(elbos: Mapping[int, float], weights: ModelPriorWeights) -> SelectionResult:
    """Score each K by L(K) - log(1 / pi_K) and pick the maximiser.

    Ties go to the smallest K.
    """
    if not elbos:
        raise DomainError("no candidate K")
    penalties = {K: -weights.log_weight(K) for K in sorted(elbos)}
    scores = {K: elbos[K] - penalties[K] for K in sorted(elbos)}
    best = max(scores.values())
    selected = min(K for K, s in scores.items() if s == best)
    return SelectionResult(dict(sorted(elbos.items())), penalties, scores, selected)


def select_k(
    data: Dataset,
    prior_factory: Callable[[int], PriorSpec],
    family: ComponentFamily,
    k_range: Sequence[int],
    weights: ModelPriorWeights,
    config: FitConfig = FitConfig(),
    threads: int = 1,
) -> SelectionResult:
    """Fit every K in ``k_range`` and select by penalised surrogate ELBO.

    Each K gets its own seed spawned from ``config.seed``, so results do
    not depend on ``threads``.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise DomainError("k_range must contain positive integers")
    children = seed_sequence(config.seed).spawn(len(ks))

    def run(i):
        K = ks[i]
        try:
            return fit(data, prior_factory(K), family, replace(config, seed=children[i]))
        except Exception as exc:  # noqa: BLE001 - re-raised with K attached
            raise SelectionError(K, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(run, range(len(ks))))
    else:
        fits = [run(i) for i in range(len(ks))]
    per_k = dict(zip(ks, fits))
    result = penalised_scores({K: r.surrogate_elbo for K, r in per_k.items()}, weights)
    result.per_k = per_k
    return result


def selection_bound(K: int, rate: float, alpha: float, model_weight: float, kl_oracle: float, n: int) -> float:
    """Right-hand side of the oracle inequality for a single K."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if not 0.0 < model_weight <= 1.0:
        raise DomainError("model weight must lie in (0, 1]")
    return (
        alpha / (1.0 - alpha) * kl_oracle
        + (1.0 + alpha) / (1.0 - alpha) * 2.0 * K * rate
        + math.log(1.0 / model_weight) / (n * (1.0 - alpha))
    )
