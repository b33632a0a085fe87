import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from tempmix.mixture import (
    ConfigurationError,
    Dataset,
    DatasetParseError,
    GaussianKnownVar,
    GaussianUnknownVar,
    MixtureParams,
    Multinomial,
    component_log_densities,
    log_likelihood,
    log_mixture_density,
    mixture_kl_upper_bound,
    sample_mixture,
    sample_simplex_dirichlet,
)
from tempmix.special import DomainError


def gauss_mix(w, m, v=None):
    if v is None:
        return MixtureParams(GaussianKnownVar(1.0), w, means=m)
    return MixtureParams(GaussianUnknownVar(), w, means=m, variances=v)


# ---------------------------------------------------------------- datasets


def test_real_csv_round_trip_is_exact():
    x = np.random.default_rng(0).normal(size=50) * 1e3
    ds = Dataset(x)
    back = Dataset.from_csv(ds.to_csv())
    np.testing.assert_array_equal(back.observations, x)
    assert ds.to_csv().splitlines()[0] == "kind=real"


def test_categorical_csv_round_trip():
    ds = Dataset(np.array([1, 3, 2, 3]), category_count=3)
    text = ds.to_csv()
    assert text == "kind=categorical,V=3\n1\n3\n2\n3\n"
    back = Dataset.from_csv(text)
    assert back.category_count == 3 and back.is_categorical
    np.testing.assert_array_equal(back.observations, [1, 3, 2, 3])


def test_empty_dataset_keeps_header():
    assert Dataset(np.zeros(0)).to_csv() == "kind=real\n"
    assert Dataset.from_csv("kind=real\n").n == 0


@pytest.mark.parametrize(
    "text, line",
    [
        ("kind=categorical,V=5\n1\n2\n7\n", 4),
        ("kind=categorical,V=5\n1\nx\n", 3),
        ("kind=real\n1.0\nabc\n", 3),
        ("kind=real\n1.0\ninf\n", 3),
        ("kind=weird\n1\n", 1),
        ("", 1),
    ],
)
def test_parse_errors_cite_line(text, line):
    with pytest.raises(DatasetParseError) as err:
        Dataset.from_csv(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_observations_are_read_only():
    ds = Dataset(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        ds.observations[0] = 3.0


# ---------------------------------------------------------------- params and densities


def test_weights_must_lie_on_simplex():
    with pytest.raises(DomainError):
        gauss_mix([0.6, 0.6], [0, 1])


def test_known_variance_fills_variances():
    p = MixtureParams(GaussianKnownVar(2.5), [0.5, 0.5], means=[0, 1])
    np.testing.assert_array_equal(p.variances, [2.5, 2.5])


def test_sorted_by_mean_permutes_weights():
    p = gauss_mix([0.2, 0.5, 0.3], [3.0, -1.0, 0.5]).sorted_by_mean()
    np.testing.assert_array_equal(p.means, [-1.0, 0.5, 3.0])
    np.testing.assert_array_equal(p.weights, [0.5, 0.3, 0.2])


def test_gaussian_log_densities_match_scipy():
    p = gauss_mix([0.3, 0.7], [-1.0, 2.0], [0.5, 2.0])
    x = np.linspace(-4, 4, 17)
    expected = np.column_stack([stats.norm.logpdf(x, -1, math.sqrt(0.5)), stats.norm.logpdf(x, 2, math.sqrt(2.0))])
    np.testing.assert_allclose(component_log_densities(p, x), expected, rtol=1e-13, atol=1e-13)
    mix = np.log(0.3 * np.exp(expected[:, 0]) + 0.7 * np.exp(expected[:, 1]))
    np.testing.assert_allclose(log_mixture_density(p, x), mix, rtol=1e-13)


def test_mixture_density_integrates_to_one():
    p = gauss_mix([0.3, 0.7], [-1.0, 2.0], [0.5, 2.0])
    total = integrate.quad(lambda t: math.exp(log_mixture_density(p, t)), -30, 30, points=[-1, 2])[0]
    assert total == pytest.approx(1.0, abs=1e-10)


def test_multinomial_log_densities():
    p = MixtureParams(Multinomial(3), [0.4, 0.6], probs=[[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]])
    got = component_log_densities(p, np.array([1, 3]))
    np.testing.assert_allclose(got, np.log([[0.2, 0.6], [0.5, 0.2]]))


def test_incompatible_observations():
    p = MixtureParams(Multinomial(3), [1.0], probs=[[0.2, 0.3, 0.5]])
    with pytest.raises(TypeError):
        component_log_densities(p, np.array([0.5]))


def test_log_likelihood_empty_is_zero():
    assert log_likelihood(gauss_mix([1.0], [0.0]), Dataset(np.zeros(0))) == 0.0


# ---------------------------------------------------------------- sampling


def test_sampling_is_seeded():
    p = gauss_mix([0.3, 0.7], [-1.0, 2.0])
    a, b = sample_mixture(p, 100, 5), sample_mixture(p, 100, 5)
    np.testing.assert_array_equal(a.observations, b.observations)
    assert sample_mixture(p, 0, 5).n == 0


def test_sampled_moments():
    p = gauss_mix([0.25, 0.75], [-2.0, 2.0])
    x = sample_mixture(p, 200_000, 1).observations
    # mean 1, variance 1 + 4 - 1
    assert x.mean() == pytest.approx(1.0, abs=4 * math.sqrt(4 / 200_000))
    assert x.var() == pytest.approx(4.0, rel=0.02)


def test_categorical_sampling_frequencies():
    p = MixtureParams(Multinomial(3), [0.5, 0.5], probs=[[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    ds = sample_mixture(p, 40_000, 2)
    freq = np.bincount(ds.observations, minlength=4)[1:] / ds.n
    np.testing.assert_allclose(freq, [0.5, 0.25, 0.25], atol=0.01)
    assert ds.category_count == 3


def test_simplex_sampler():
    w = sample_simplex_dirichlet([2 / 3] * 3, 4)
    assert w.shape == (3,) and abs(w.sum() - 1) < 1e-15 and np.all(w >= 0)


# ---------------------------------------------------------------- KL bound


def _quad_mixture_kl(p0, p):
    f = lambda t: math.exp(log_mixture_density(p0, t)) * (log_mixture_density(p0, t) - log_mixture_density(p, t))
    pts = sorted(set(p0.means.tolist() + p.means.tolist()))
    return integrate.quad(f, -40, 40, points=pts, limit=400, epsabs=1e-12)[0]


def test_kl_bound_is_exact_for_one_component():
    p0, p = gauss_mix([1.0], [0.0]), gauss_mix([1.0], [1.5])
    assert mixture_kl_upper_bound(p0, p) == pytest.approx(1.125)
    assert _quad_mixture_kl(p0, p) == pytest.approx(1.125, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_kl_bound_dominates(m0, m, w0, w):
    p0, p = gauss_mix([w0, 1 - w0], m0), gauss_mix([w, 1 - w], m)
    assert _quad_mixture_kl(p0, p) <= mixture_kl_upper_bound(p0, p) + 1e-6


def test_kl_bound_mismatch():
    with pytest.raises(ConfigurationError):
        mixture_kl_upper_bound(gauss_mix([1.0], [0.0]), gauss_mix([0.5, 0.5], [0.0, 1.0]))
