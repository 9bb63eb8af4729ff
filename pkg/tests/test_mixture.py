import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal

from conflictlab.mixture import (
    Conditioner,
    FitConfig,
    GaussianMixture,
    MixtureError,
    condition,
    fit_em,
    log_density,
    marginal,
    n_parameters,
    sample,
    select_bic,
)

from .helpers import random_mixture, random_spd


# --- construction and invariants ---------------------------------------------


def test_weights_are_normalized_and_validated():
    m = GaussianMixture([2.0, 2.0], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    assert abs(m.weights.sum() - 1.0) < 1e-12
    with pytest.raises(MixtureError):
        GaussianMixture([-0.1, 1.1], [[0.0], [1.0]], [[[1.0]], [[1.0]]])


def test_rejects_asymmetric_and_indefinite_covariances():
    with pytest.raises(MixtureError):
        GaussianMixture.single([0, 0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(MixtureError):
        GaussianMixture.single([0, 0], [[1.0, 2.0], [2.0, 1.0]])


def test_rejects_dimension_mismatch():
    with pytest.raises(MixtureError):
        GaussianMixture([1.0], [[0.0, 0.0]], [[[1.0]]])
    m = GaussianMixture.single([0.0, 0.0], np.eye(2))
    with pytest.raises(MixtureError):
        log_density(m, [0.0, 0.0, 0.0])


def test_json_round_trip_is_exact():
    m = random_mixture(np.random.default_rng(1), 3, 4)
    back = GaussianMixture.from_json(m.to_json())
    x = np.random.default_rng(2).normal(size=(100, 3))
    assert np.array_equal(log_density(m, x), log_density(back, x))
    doc = json.loads(m.to_json())
    assert set(doc) == {"weights", "means", "covariances"}


# --- log_density --------------------------------------------------------------


def test_standard_normal_ordinate():
    m = GaussianMixture.single([0.0], [[1.0]])
    assert log_density(m, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    assert log_density(m, [0.0]) == pytest.approx(-0.9189, abs=1e-4)


def test_duplicate_components_equal_single():
    one = GaussianMixture.single([0.0], [[1.0]])
    two = GaussianMixture([0.5, 0.5], [[0.0], [0.0]], [[[1.0]], [[1.0]]])
    assert log_density(two, [0.0]) == pytest.approx(log_density(one, [0.0]), abs=1e-15)


def test_log_density_matches_naive_sum_on_fitted_mixture():
    rng = np.random.default_rng(3)
    data = np.vstack(
        [rng.normal([-3, 0], 0.7, (400, 2)), rng.normal([3, 1], 1.0, (400, 2)), rng.normal([0, 5], 0.5, (400, 2))]
    )
    m = fit_em(data, 3, FitConfig(restarts=2), np.random.default_rng(4)).mixture
    g = np.linspace(-6, 6, 25)
    x = np.array([[a, b] for a in g for b in g])
    naive = sum(w * multivariate_normal(mu, S).pdf(x) for w, mu, S in zip(m.weights, m.means, m.covariances))
    ok = naive > 1e-250
    got = np.exp(log_density(m, x))
    np.testing.assert_allclose(got[ok], naive[ok], rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4), k=st.integers(1, 4))
def test_property_log_density_equals_naive_sum(seed, d, k):
    rng = np.random.default_rng(seed)
    m = random_mixture(rng, d, k)
    x = rng.normal(scale=2.0, size=(10, d))
    naive = sum(w * multivariate_normal(mu, S).pdf(x) for w, mu, S in zip(m.weights, m.means, m.covariances))
    naive = np.atleast_1d(naive)
    ok = naive > 1e-250
    np.testing.assert_allclose(np.exp(log_density(m, x))[ok], naive[ok], rtol=1e-10)


# --- sample -------------------------------------------------------------------


def test_sample_mean_within_4_se():
    mu = np.array([1.0, -2.0])
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    x = sample(GaussianMixture.single(mu, cov), 100_000, np.random.default_rng(5))
    se = np.sqrt(np.diag(cov) / x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - mu) < 4 * se)


def test_sample_zero_weight_component_never_drawn():
    m = GaussianMixture([1.0, 0.0], [[-50.0], [50.0]], [[[1.0]], [[1.0]]])
    x = sample(m, 5000, np.random.default_rng(6))
    assert np.all(x < 0)


def test_sample_component_proportions():
    w = np.array([0.3, 0.7])
    m = GaussianMixture(w, [[-10.0, 0.0], [10.0, 0.0]], [np.eye(2), np.eye(2)])
    n = 100_000
    x = sample(m, n, np.random.default_rng(7))
    # nearest-mean classification is exact at this separation
    p1 = np.mean(x[:, 0] < 0)
    assert abs(p1 - w[0]) < 4 * math.sqrt(w[0] * w[1] / n)


def test_sample_rejects_bad_n():
    with pytest.raises(ValueError):
        sample(GaussianMixture.single([0.0], [[1.0]]), 0, np.random.default_rng(0))


# --- condition / marginal -----------------------------------------------------


def test_condition_standard_formula():
    m = GaussianMixture.single([0.0, 0.0], [[2.0, 1.0], [1.0, 2.0]])
    c = condition(m, [1], [1.0])
    assert c.means[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert c.covariances[0, 0, 0] == pytest.approx(1.5, abs=1e-14)


def test_condition_block_diagonal_equals_marginal():
    cov = np.zeros((4, 4))
    cov[:2, :2] = [[2.0, 0.4], [0.4, 1.0]]
    cov[2:, 2:] = [[3.0, -0.5], [-0.5, 1.5]]
    m = GaussianMixture.single([1.0, 2.0, 3.0, 4.0], cov)
    c = condition(m, [2, 3], [10.0, -7.0])
    mg = marginal(m, [0, 1])
    np.testing.assert_allclose(c.means, mg.means, atol=1e-12)
    np.testing.assert_allclose(c.covariances, mg.covariances, atol=1e-12)


def test_condition_rejects_bad_index_sets():
    m = GaussianMixture.single([0.0, 0.0], np.eye(2))
    with pytest.raises(MixtureError):
        condition(m, [], [])
    with pytest.raises(MixtureError):
        condition(m, [0, 1], [0.0, 0.0])
    with pytest.raises(MixtureError):
        condition(m, [0], [0.0, 1.0])


def test_conditional_matches_grid_normalized_slice():
    rng = np.random.default_rng(8)
    data = np.vstack([rng.multivariate_normal([0, 0], [[1, 0.8], [0.8, 1]], 600), rng.normal([3, -1], 0.6, (400, 2))])
    m = fit_em(data, 2, FitConfig(restarts=1), np.random.default_rng(9)).mixture
    z = 0.4
    c = condition(m, [1], [z])
    t = np.linspace(-6, 8, 50)
    joint = lambda th: float(np.exp(log_density(m, [th, z])))  # noqa: E731
    norm, _ = integrate.quad(joint, -np.inf, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    expect = np.array([joint(v) for v in t]) / norm
    got = np.exp(log_density(c, t[:, None]))
    ok = expect > 1e-12
    np.testing.assert_allclose(got[ok], expect[ok], rtol=1e-4)


def test_marginal_examples():
    m = GaussianMixture.single([1.0, 2.0], np.diag([3.0, 4.0]))
    mg = marginal(m, [0])
    assert mg.means[0, 0] == 1.0 and mg.covariances[0, 0, 0] == 3.0
    full = marginal(m, [0, 1])
    np.testing.assert_array_equal(full.means, m.means)
    np.testing.assert_array_equal(full.covariances, m.covariances)
    with pytest.raises(MixtureError):
        marginal(m, [])


def test_marginal_matches_quadrature():
    rng = np.random.default_rng(10)
    m = random_mixture(rng, 2, 3)
    mg = marginal(m, [0])
    for x0 in np.linspace(-3, 3, 7):
        val, _ = integrate.quad(lambda y: float(np.exp(log_density(m, [x0, y]))), -np.inf, np.inf, epsrel=1e-12)
        assert float(np.exp(log_density(mg, [x0]))) == pytest.approx(val, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5), k=st.integers(1, 4))
def test_property_conditional_weights_sum_to_one(seed, d, k):
    rng = np.random.default_rng(seed)
    m = random_mixture(rng, d, k)
    n_obs = int(rng.integers(1, d))
    idx = rng.choice(d, n_obs, replace=False)
    c = condition(m, idx, rng.normal(scale=3, size=n_obs))
    assert abs(c.weights.sum() - 1.0) < 1e-12
    assert c.dimension == d - n_obs


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5))
def test_property_single_component_condition_matches_gaussian_formula(seed, d):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=d)
    S = random_spd(rng, d)
    n_obs = int(rng.integers(1, d))
    obs = np.sort(rng.choice(d, n_obs, replace=False))
    free = np.setdiff1d(np.arange(d), obs)
    v = rng.normal(size=n_obs)
    c = condition(GaussianMixture.single(mu, S), obs, v)
    # textbook formula via explicit inverse
    gain = S[np.ix_(free, obs)] @ np.linalg.inv(S[np.ix_(obs, obs)])
    np.testing.assert_allclose(c.means[0], mu[free] + gain @ (v - mu[obs]), atol=1e-10)
    np.testing.assert_allclose(c.covariances[0], S[np.ix_(free, free)] - gain @ S[np.ix_(obs, free)], atol=1e-10)
    mg = marginal(c, [0])
    assert mg.covariances[0, 0, 0] == pytest.approx(c.covariances[0, 0, 0], abs=1e-10)


def test_condition_many_matches_condition():
    rng = np.random.default_rng(11)
    m = random_mixture(rng, 4, 3)
    cond = Conditioner(m, [1, 3])
    vals = rng.normal(size=(5, 2))
    w, mu = cond.condition_many(vals)
    for i in range(5):
        c = condition(m, [1, 3], vals[i])
        np.testing.assert_allclose(w[i], c.weights, atol=1e-14)
        np.testing.assert_allclose(mu[i], c.means, atol=1e-12)


# --- EM and BIC ---------------------------------------------------------------


def test_em_single_gaussian_moments():
    x = np.random.default_rng(12).normal(5.0, math.sqrt(2.0), size=(10_000, 1))
    fit = fit_em(x, 1, FitConfig(), np.random.default_rng(13))
    # oracle: sample moments
    assert abs(fit.mixture.means[0, 0] - 5.0) < 0.1
    assert abs(fit.mixture.covariances[0, 0, 0] - 2.0) < 0.2
    assert fit.mixture.means[0, 0] == pytest.approx(x.mean(), abs=1e-8)
    assert fit.mixture.covariances[0, 0, 0] == pytest.approx(x.var(), rel=1e-5)


def test_em_two_clusters_recovered():
    rng = np.random.default_rng(14)
    x = np.concatenate([rng.normal(-10, 1, 3000), rng.normal(10, 1, 7000)])[:, None]
    fit = fit_em(x, 2, FitConfig(), np.random.default_rng(15))
    order = np.argsort(fit.mixture.means[:, 0])
    means, weights = fit.mixture.means[order, 0], fit.mixture.weights[order]
    # k-means oracle: with this separation the sign split is the k-means solution
    oracle = np.array([x[x < 0].mean(), x[x > 0].mean()])
    np.testing.assert_allclose(means, oracle, atol=0.05)
    assert np.all(np.abs(means - [-10, 10]) < 0.2)
    assert np.all(np.abs(weights - [0.3, 0.7]) < 0.05)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 4), structure=st.sampled_from(["full", "diagonal"]))
def test_property_em_monotone(seed, k, structure):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(rng.normal(scale=3, size=2), 1.0, (100, 2)) for _ in range(3)])
    fit = fit_em(x, k, FitConfig(restarts=1, max_iterations=200), rng, structure)
    h = np.asarray(fit.history)
    assert np.all(np.diff(h) >= -1e-8 * np.maximum(1.0, np.abs(h[:-1])))
    assert fit.log_likelihood == h[-1]


def test_em_requires_enough_data_and_finite():
    with pytest.raises(MixtureError):
        fit_em(np.zeros((4, 2)), 2)
    bad = np.ones((50, 1))
    bad[3] = np.nan
    with pytest.raises(MixtureError):
        fit_em(bad, 1)


def test_em_is_deterministic():
    x = np.random.default_rng(16).normal(size=(500, 2))
    a = fit_em(x, 3, FitConfig(restarts=2), np.random.default_rng(1))
    b = fit_em(x, 3, FitConfig(restarts=2), np.random.default_rng(1))
    np.testing.assert_array_equal(a.mixture.means, b.mixture.means)


def test_n_parameters():
    for k in (1, 3):
        for d in (1, 4):
            assert n_parameters(k, d, "full") == k - 1 + k * d + k * d * (d + 1) // 2
            assert n_parameters(k, d, "diagonal") == k - 1 + 2 * k * d


def test_bic_selects_one_for_single_gaussian():
    cfg = FitConfig(max_components=4, restarts=1)
    picks = []
    for seed in range(10):
        x = np.random.default_rng(100 + seed).multivariate_normal([1, 2], [[1, 0.5], [0.5, 2]], 5000)
        picks.append(select_bic(x, cfg, np.random.default_rng(seed)).k)
    assert sum(p == 1 for p in picks) >= 9


def test_bic_selects_three_for_three_clusters():
    cfg = FitConfig(max_components=5, restarts=2)
    centres = np.array([[-8, 0], [8, 0], [0, 8]])
    picks = []
    for seed in range(10):
        rng = np.random.default_rng(200 + seed)
        x = np.vstack([rng.normal(c, 1.0, (700, 2)) for c in centres])
        picks.append(select_bic(x, cfg, np.random.default_rng(seed)).k)
    assert sum(p == 3 for p in picks) >= 9


def test_selected_bic_is_maximal_and_matches_formula():
    x = np.random.default_rng(17).normal(size=(800, 2))
    sel = select_bic(x, FitConfig(max_components=3, restarts=1), np.random.default_rng(0))
    assert all(sel.bic >= c.bic for c in sel.table)
    for c in sel.table:
        assert c.bic == pytest.approx(2 * c.log_likelihood - c.n_params * math.log(800))
    assert len(sel.table) == 6


def test_bic_workers_do_not_change_result():
    x = np.random.default_rng(18).normal(size=(600, 2))
    a = select_bic(x, FitConfig(max_components=3, restarts=1, workers=1), np.random.default_rng(3))
    b = select_bic(x, FitConfig(max_components=3, restarts=1, workers=3), np.random.default_rng(3))
    assert a.bic == b.bic and a.k == b.k


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(max_components=0)
    with pytest.raises(ValueError):
        FitConfig(em_tolerance=0)
    with pytest.raises(ValueError):
        FitConfig(ridge=-1)
