import numpy as np
import pytest
from scipy import optimize

from tempmix.em import EMConfig, em_fit, em_fit_all
from tempmix.mixture import Dataset, GaussianKnownVar, MixtureParams, log_likelihood, sample_mixture
from tempmix.special import DomainError


def test_k1_is_sample_mean():
    data = Dataset(np.array([0.5, 1.5, 4.0]))
    st = em_fit(data, 1)
    assert st.params.means[0] == pytest.approx(2.0, abs=1e-15)
    assert st.params.weights.tolist() == [1.0]
    assert st.iterations == 1 and st.converged


def test_two_points_symmetric():
    data = Dataset(np.array([-3.0, 3.0]))
    st = em_fit(data, 2, 0.01, EMConfig(init="kmeans"))
    np.testing.assert_allclose(np.sort(st.params.means), [-3.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(st.params.weights, [0.5, 0.5], atol=1e-12)


def test_well_separated_recovery_and_grid_oracle():
    truth = MixtureParams(GaussianKnownVar(1.0), [0.5, 0.5], means=[-10.0, 10.0])
    data = sample_mixture(truth, 500, 3)
    st = em_fit(data, 2, 1.0, EMConfig(restarts=3))
    means = np.sort(st.params.means)
    assert np.all(np.abs(means - [-10, 10]) < 3 / np.sqrt(250))

    # the MLE from a generic optimiser agrees
    def nll(v):
        w = 1 / (1 + np.exp(-v[2]))
        return -log_likelihood(MixtureParams(GaussianKnownVar(1.0), [w, 1 - w], means=v[:2]), data)

    opt = optimize.minimize(nll, [-9.0, 9.0, 0.0], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 5000})
    np.testing.assert_allclose(means, np.sort(opt.x[:2]), atol=1e-4)


def test_loglik_monotone_and_simplex():
    truth = MixtureParams(GaussianKnownVar(1.0), [0.2, 0.5, 0.3], means=[-2.0, 0.5, 3.0])
    data = sample_mixture(truth, 400, 1)
    for st in em_fit_all(data, 3, 1.0, EMConfig(restarts=3, seed=2)):
        trace = np.array(st.loglik_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))
        assert abs(st.params.weights.sum() - 1) < 1e-12


def test_best_restart_and_determinism():
    data = sample_mixture(MixtureParams(GaussianKnownVar(1.0), [0.5, 0.5], means=[-1.0, 1.0]), 100, 0)
    cfg = EMConfig(restarts=4, seed=7)
    all_runs = em_fit_all(data, 2, 1.0, cfg)
    best = em_fit(data, 2, 1.0, cfg)
    assert best.loglik == max(s.loglik for s in all_runs)
    assert em_fit(data, 2, 1.0, cfg).loglik_trace == best.loglik_trace


def test_empty_component_is_reseeded():
    # far more components than distinct points forces empty mass
    data = Dataset(np.array([0.0, 0.0, 0.0, 50.0]))
    st = em_fit(data, 2, 1.0, EMConfig(init="kmeans", max_iters=50))
    assert np.all(np.isfinite(st.params.means))


def test_rejects_categorical_and_empty():
    with pytest.raises(DomainError):
        em_fit(Dataset(np.array([1, 2]), category_count=2), 2)
    with pytest.raises(DomainError):
        em_fit(Dataset(np.zeros(0)), 2)
