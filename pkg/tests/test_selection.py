import math

import numpy as np
import pytest

from tempmix.cavi import FitConfig
from tempmix.mixture import GaussianKnownVar, MixtureParams, sample_mixture
from tempmix.selection import (
    Custom,
    Geometric,
    SelectionError,
    UniformUpTo,
    model_weights_from_name,
    penalised_scores,
    select_k,
    selection_bound,
)
from tempmix.special import DomainError
from tempmix.variational import GaussianMeanPrior, PriorSpec


def test_penalised_arithmetic():
    res = penalised_scores({1: -100.0, 2: -99.0, 3: -98.9}, Geometric())
    assert res.penalties == {1: math.log(2), 2: 2 * math.log(2), 3: 3 * math.log(2)}
    assert res.scores[2] == -99.0 - 2 * math.log(2)
    assert res.selected_k == 2


def test_ties_go_to_smaller_k():
    res = penalised_scores({1: -10.0, 2: -10.0}, UniformUpTo(2))
    assert res.selected_k == 1


def test_single_candidate():
    assert penalised_scores({1: -3.0}, Geometric()).selected_k == 1


def test_weights():
    assert UniformUpTo(4).log_weight(3) == -math.log(4)
    with pytest.raises(DomainError):
        UniformUpTo(4).log_weight(5)
    assert Custom((0.5, 0.25)).log_weight(2) == math.log(0.25)
    with pytest.raises(DomainError):
        Custom((0.9, 0.9))
    assert isinstance(model_weights_from_name("geometric", 3), Geometric)
    with pytest.raises(DomainError):
        model_weights_from_name("poisson", 3)


def _data(n=300, seed=0):
    truth = MixtureParams(GaussianKnownVar(1.0), [0.3, 0.3, 0.4], means=[-6.0, 0.0, 6.0])
    return sample_mixture(truth, n, seed)


def _prior(K):
    return PriorSpec.symmetric(K, GaussianMeanPrior(50.0))


def test_select_recovers_separated_components():
    res = select_k(_data(), _prior, GaussianKnownVar(1.0), range(1, 6), Geometric(), FitConfig(restarts=3))
    assert res.selected_k == 3
    best = max(res.scores.values())
    assert res.scores[res.selected_k] == best
    assert set(res.per_k) == {1, 2, 3, 4, 5}


def test_select_is_thread_independent():
    cfg = FitConfig(restarts=2, seed=5)
    a = select_k(_data(80), _prior, GaussianKnownVar(1.0), [1, 2, 3], Geometric(), cfg)
    b = select_k(_data(80), _prior, GaussianKnownVar(1.0), [1, 2, 3], Geometric(), cfg, threads=3)
    assert a.to_dict() == b.to_dict()


def test_failure_names_k():
    def bad_prior(K):
        if K == 2:
            raise ValueError("boom")
        return _prior(K)

    with pytest.raises(SelectionError) as err:
        select_k(_data(30), bad_prior, GaussianKnownVar(1.0), [1, 2], Geometric())
    assert err.value.K == 2


def test_selection_bound():
    got = selection_bound(3, 0.01, 0.5, 0.125, 0.2, 1000)
    assert got == pytest.approx(0.2 + 3 * 6 * 0.01 + math.log(8) / 500, rel=1e-15)
    with pytest.raises(DomainError):
        selection_bound(3, 0.01, 1.0, 0.125, 0.2, 1000)
