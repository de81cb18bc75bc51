import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from conftest import blobs
from protocal.errors import InsufficientData, InvalidConfig, SingularCovariance
from protocal.gmm import (
    EmConfig,
    GaussianComponent,
    MixtureEstimate,
    _reseed_empty,
    e_step,
    fit_em,
    gaussian_log_density,
    kmeans_init,
    m_step,
)
from protocal.representation import to_log_prob


def point_masses():
    return np.array([[-0.1, -2.3]] * 10 + [[-2.3, -0.1]] * 10)


def mixture(means, covs, weights):
    return MixtureEstimate(
        weights=np.asarray(weights, float), means=np.asarray(means, float), covariances=np.asarray(covs, float)
    )


# -- log density ---------------------------------------------------------------


def test_density_at_the_mean():
    c = GaussianComponent(np.zeros(2), np.eye(2))
    assert gaussian_log_density([0.0, 0.0], c) == pytest.approx(-1.8378770664093453, abs=1e-12)


def test_standard_normal_one_sigma():
    c = GaussianComponent(np.zeros(1), np.eye(1))
    assert gaussian_log_density([1.0], c) == pytest.approx(-1.4189385332046727, abs=1e-12)


def test_scaled_identity_covariance():
    # -log(2 pi) - log(2) - 1/2, evaluated independently with scipy
    c = GaussianComponent(np.zeros(2), 2 * np.eye(2))
    assert gaussian_log_density([1.0, 1.0], c) == pytest.approx(-3.0310242469692907, abs=1e-12)


def test_density_matches_scipy_on_random_covariances(rng):
    for d in (1, 2, 3, 5, 8):
        A = rng.standard_normal((d, d))
        cov = A @ A.T + 0.1 * np.eye(d)
        mean = rng.standard_normal(d)
        X = rng.standard_normal((20, d))
        got = gaussian_log_density(X, GaussianComponent(mean, cov))
        np.testing.assert_allclose(got, multivariate_normal(mean, cov).logpdf(X), rtol=1e-10, atol=1e-10)


def test_singular_covariance():
    with pytest.raises(SingularCovariance):
        gaussian_log_density([0.0, 0.0], GaussianComponent(np.zeros(2), np.zeros((2, 2))))


# -- k-means initialisation ----------------------------------------------------


def test_kmeans_two_point_masses():
    est = kmeans_init(point_masses(), 2, seed=3)
    got = est.means[np.argsort(est.means[:, 0])]
    np.testing.assert_allclose(got, [[-2.3, -0.1], [-0.1, -2.3]], atol=1e-12)
    np.testing.assert_allclose(est.weights, [0.5, 0.5])
    for cov in est.covariances:
        np.testing.assert_allclose(cov, 1e-6 * np.eye(2), atol=1e-15)


def test_kmeans_one_point_per_cluster(rng):
    X = rng.standard_normal((4, 4))
    est = kmeans_init(X, 4, seed=0, reg=1e-6)
    assert sorted(map(tuple, est.means)) == sorted(map(tuple, X))
    for cov in est.covariances:
        np.testing.assert_array_equal(cov, 1e-6 * np.eye(4))
    np.testing.assert_allclose(est.weights, 0.25)


def test_kmeans_recovers_well_separated_blobs():
    gen_means = np.array([[0.0, 0.0], [10.0, 0.0]])
    X, _ = blobs(1, 200, gen_means)
    for seed in range(5):
        est = kmeans_init(X, 2, seed)
        got = est.means[np.argsort(est.means[:, 0])]
        assert np.all(np.abs(got - gen_means) < 0.5)


def test_kmeans_is_deterministic(rng):
    X = rng.standard_normal((60, 3))
    a, b = kmeans_init(X, 3, 17), kmeans_init(X, 3, 17)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_kmeans_needs_enough_points():
    with pytest.raises(InsufficientData):
        kmeans_init(np.zeros((2, 3)), 3, 0)


def test_empty_cluster_moves_to_farthest_point():
    X = np.array([[0.0], [1.0], [5.0]])
    centers = np.array([[2.0], [100.0]])
    labels = np.array([0, 0, 0])
    assert _reseed_empty(X, centers, labels)
    assert centers[1, 0] == 5.0
    assert labels.tolist() == [0, 0, 1]


def test_kmeans_identical_points_keep_all_components():
    X = np.ones((6, 2))
    est = kmeans_init(X, 2, 0)
    assert est.means.shape == (2, 2)
    np.testing.assert_allclose(est.weights.sum(), 1.0)
    assert np.all(est.weights > 0)


# -- E step --------------------------------------------------------------------


def test_e_step_equal_components_give_uniform_rows(rng):
    est = mixture([[0.0, 0.0]] * 3, [np.eye(2)] * 3, [1 / 3] * 3)
    R = e_step(rng.standard_normal((7, 2)), est).responsibilities
    np.testing.assert_allclose(R, 1 / 3, atol=1e-15)


def test_e_step_dominant_component():
    est = mixture([[0.0, 0.0], [20.0, 0.0]], [np.eye(2)] * 2, [0.5, 0.5])
    R = e_step([[0.0, 0.0]], est).responsibilities
    assert R[0, 0] > 1 - 1e-8


def test_e_step_matches_direct_density_ratio(rng):
    means = rng.standard_normal((3, 3))
    covs = []
    for _ in range(3):
        A = rng.standard_normal((3, 3))
        covs.append(A @ A.T + 0.5 * np.eye(3))
    weights = np.array([0.2, 0.3, 0.5])
    X = rng.standard_normal((15, 3))
    step = e_step(X, mixture(means, covs, weights))
    # Plain densities, no log-space arithmetic.
    joint = np.column_stack(
        [weights[k] * multivariate_normal(means[k], covs[k]).pdf(X) for k in range(3)]
    )
    np.testing.assert_allclose(step.responsibilities, joint / joint.sum(axis=1, keepdims=True), atol=1e-10)
    assert step.log_likelihood == pytest.approx(np.log(joint.sum(axis=1)).mean(), abs=1e-10)
    assert not step.degenerate


def test_e_step_underflow_gives_uniform_row_and_flag():
    est = mixture([[0.0, 0.0], [1.0, 0.0]], [np.eye(2)] * 2, [0.5, 0.5])
    step = e_step([[1e160, 1e160], [0.0, 0.0]], est)
    assert step.degenerate
    np.testing.assert_allclose(step.responsibilities[0], [0.5, 0.5])
    assert np.isfinite(step.log_likelihood)


# -- M step --------------------------------------------------------------------


def test_m_step_hard_assignments_give_per_cluster_mle(rng):
    X = rng.standard_normal((12, 2))
    labels = np.arange(12) % 2
    R = np.eye(2)[labels]
    est = m_step(X, R, reg=0.0)
    for k in range(2):
        members = X[labels == k]
        np.testing.assert_allclose(est.means[k], members.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(est.covariances[k], np.cov(members.T, bias=True), atol=1e-12)
    np.testing.assert_allclose(est.weights, [0.5, 0.5])


def test_m_step_uniform_responsibilities_give_global_mean(rng):
    X = rng.standard_normal((9, 3))
    est = m_step(X, np.full((9, 3), 1 / 3))
    for k in range(3):
        np.testing.assert_allclose(est.means[k], X.mean(axis=0), atol=1e-12)


def test_m_step_matches_weighted_average_oracle(rng):
    X = rng.standard_normal((5, 2))
    R = rng.random((5, 2))
    R /= R.sum(axis=1, keepdims=True)
    reg = 1e-6
    est = m_step(X, R, reg=reg)
    for k in range(2):
        total = sum(R[i, k] for i in range(5))
        mean = [sum(R[i, k] * X[i, j] for i in range(5)) / total for j in range(2)]
        cov = [
            [
                sum(R[i, k] * (X[i, a] - mean[a]) * (X[i, b] - mean[b]) for i in range(5)) / total
                + (reg if a == b else 0.0)
                for b in range(2)
            ]
            for a in range(2)
        ]
        assert est.weights[k] == pytest.approx(total / 5, abs=1e-12)
        np.testing.assert_allclose(est.means[k], mean, atol=1e-12)
        np.testing.assert_allclose(est.covariances[k], cov, atol=1e-12)


def test_m_step_reinitialises_empty_component(rng):
    X = rng.standard_normal((6, 2))
    R = np.zeros((6, 2))
    R[:, 0] = 1.0
    R[4] = [0.7, 0.0]  # lowest maximum responsibility
    est = m_step(X, R)
    assert est.degenerate
    np.testing.assert_array_equal(est.means[1], X[4])
    np.testing.assert_allclose(est.weights.sum(), 1.0)
    np.linalg.cholesky(est.covariances[1])


def test_m_step_keeps_previous_covariance_only_when_better(rng):
    from protocal.gmm import _covariance_objective

    X = rng.standard_normal((30, 2)) * [1.0, 1e-3]
    R = np.ones((30, 1))
    fresh = m_step(X, R, reg=1e-6)
    scatter = np.cov(X.T, bias=True)
    # A previous covariance equal to the raw scatter beats the ridged one.
    prev = mixture(fresh.means, [scatter], [1.0])
    kept = m_step(X, R, reg=1e-6, previous=prev)
    np.testing.assert_array_equal(kept.covariances[0], scatter)
    assert _covariance_objective(scatter, scatter) < _covariance_objective(fresh.covariances[0], scatter)
    # A poor previous covariance is replaced.
    bad = mixture(fresh.means, [np.eye(2) * 50.0], [1.0])
    np.testing.assert_array_equal(m_step(X, R, reg=1e-6, previous=bad).covariances[0], fresh.covariances[0])


# -- full fit ------------------------------------------------------------------


def test_fit_point_masses_converges_fast():
    est = fit_em(point_masses(), 2, seed=0)
    assert est.converged
    assert est.iterations <= 2


def test_fit_recovers_blob_means():
    gen = np.array([[0.0, 0.0], [8.0, 0.0]])
    X, _ = blobs(4, 300, gen)
    est = fit_em(X, 2, seed=0)
    got = est.means[np.argsort(est.means[:, 0])]
    assert np.all(np.abs(got - gen) < 0.3)


def test_single_iteration_contract():
    gen = np.array([[0.0, 0.0], [1.5, 0.5]])
    X, _ = blobs(5, 300, gen)
    est = fit_em(X, 2, seed=0, config=EmConfig(max_iter=1))
    assert est.iterations == 1
    assert not est.converged
    assert len(est.trajectory) == 2


def test_convergence_flag_matches_trajectory(rng):
    X, _ = blobs(6, 200, [[0, 0, 0], [3, 0, 0], [0, 3, 0]])
    for seed in range(5):
        est = fit_em(X, 3, seed)
        assert est.iterations <= 100
        tail = abs(est.trajectory[-1] - est.trajectory[-2]) < 1e-3
        assert est.converged == tail
        assert est.log_likelihood == est.trajectory[-1]


def test_fit_is_bit_reproducible():
    X, _ = blobs(7, 150, [[0, 0], [2, 1]])
    a, b = fit_em(X, 2, 11), fit_em(X, 2, 11)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.trajectory == b.trajectory


def test_shifting_data_shifts_means_only():
    X, _ = blobs(8, 200, [[0, 0], [4, 1]])
    c = np.array([3.25, -7.5])
    a, b = fit_em(X, 2, 2), fit_em(X + c, 2, 2)
    np.testing.assert_allclose(b.means, a.means + c, atol=1e-9)
    np.testing.assert_allclose(b.covariances, a.covariances, atol=1e-9)
    np.testing.assert_allclose(b.weights, a.weights, atol=1e-9)
    np.testing.assert_allclose(e_step(X + c, b).responsibilities, e_step(X, a).responsibilities, atol=1e-9)


def test_em_config_validation():
    for bad in (dict(max_iter=0), dict(tol=0.0), dict(reg=-1.0)):
        with pytest.raises(InvalidConfig):
            EmConfig(**bad)


def test_zero_ridge_on_identical_points_is_singular():
    with pytest.raises(SingularCovariance):
        fit_em(np.ones((10, 2)), 2, 0, EmConfig(reg=0.0))


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=2, max_value=5),
    st.integers(min_value=0, max_value=2**32),
    st.floats(min_value=0.2, max_value=1.5),
)
def test_em_monotone_on_log_prob_data(n, seed, spread):
    gen = np.random.default_rng(seed)
    centers = gen.normal(0, 2.0, (n, n))
    labels = gen.integers(n, size=40 * n)
    X = to_log_prob(centers[labels] + spread * gen.standard_normal((40 * n, n)))
    est = fit_em(X, n, seed)
    assert np.all(np.diff(est.trajectory) >= -1e-9)
    np.testing.assert_allclose(est.weights.sum(), 1.0, atol=1e-9)
    for cov in est.covariances:
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.det(cov) > 0
        np.linalg.cholesky(cov)
