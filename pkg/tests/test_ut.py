import numpy as np
import pytest

from gpsteer.dynamics import AffineDynamics, TransitionModel
from gpsteer.ut import AffineLaw, GaussianState, sigma_points, ut_propagate


def zero_law(n_input, n_state):
    return AffineLaw(np.zeros(n_input), np.zeros((n_input, n_state)))


def random_psd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T) / n + 1e-3 * np.eye(n)


class SquareModel(TransitionModel):
    n_state = 1
    n_input = 1

    def mean(self, z, u):
        return np.asarray(z) ** 2

    def noise_cov(self, z, u):
        return np.zeros((1, 1))

    def jacobians(self, z, u):
        return 2.0 * np.asarray(z)[None, :], np.zeros((1, 1))


def test_scalar_sigma_points_and_weights():
    pts = sigma_points(GaussianState([0.0], [[1.0]]), alpha=1.0, beta=0.0,
                       kappa=2.0)
    assert np.allclose(sorted(pts.points[:, 0]),
                       [-np.sqrt(3), 0.0, np.sqrt(3)], atol=1e-12)
    assert np.allclose(pts.mean_weights, [2 / 3, 1 / 6, 1 / 6], atol=1e-15)
    assert pts.cov_weights[0] == pytest.approx(2 / 3, abs=1e-15)


def test_zero_covariance_keeps_points_at_mean():
    mu = np.array([1.0, -2.0, 0.5])
    pts = sigma_points(GaussianState(mu, np.zeros((3, 3))))
    # the jitter floor (1e-12) spreads points by ~1e-6 at most
    assert np.allclose(pts.points, mu[None, :], atol=1e-5)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_weighted_moments_reconstruct_the_state(n):
    rng = np.random.default_rng(n)
    state = GaussianState(rng.normal(size=n), random_psd(rng, n))
    pts = sigma_points(state)
    assert pts.mean_weights.sum() == pytest.approx(1.0, abs=1e-12)
    mean = pts.mean_weights @ pts.points
    centered = pts.points - mean[None, :]
    cov = (centered.T * pts.cov_weights) @ centered
    assert np.allclose(mean, state.mean, atol=1e-10)
    assert np.allclose(cov, state.cov, atol=1e-10)


def test_symmetric_pairs_about_the_mean():
    rng = np.random.default_rng(9)
    n = 4
    state = GaussianState(rng.normal(size=n), random_psd(rng, n))
    pts = sigma_points(state)
    for i in range(1, n + 1):
        lhs = pts.points[i] - state.mean
        rhs = state.mean - pts.points[i + n]
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_invalid_spread_parameters_rejected():
    with pytest.raises(ValueError):
        sigma_points(GaussianState([0.0], [[1.0]]), alpha=1.0, kappa=-1.0)


def test_affine_exactness_over_random_systems():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 4))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        d = rng.normal(size=n)
        W = random_psd(rng, n, scale=0.3)
        model = AffineDynamics(A, B, d, W)
        law = AffineLaw(rng.normal(size=m), rng.normal(size=(m, n)))
        state = GaussianState(rng.normal(size=n), random_psd(rng, n))
        out = ut_propagate(state, model, law)
        M = A + B @ law.gain
        expected_mean = M @ state.mean + B @ law.feedforward + d
        expected_cov = M @ state.cov @ M.T + W
        assert np.allclose(out.mean, expected_mean, atol=1e-10)
        assert np.allclose(out.cov, expected_cov, atol=1e-10)


def test_square_map_hand_computed_mean():
    # z ~ N(0,1), z' = z^2, points {0, +-sqrt(3)} with weights (2/3,1/6,1/6)
    # give mean (1/6)(3 + 3) = 1, matching E[z^2].
    state = GaussianState([0.0], [[1.0]])
    out = ut_propagate(state, SquareModel(), zero_law(1, 1),
                       alpha=1.0, beta=0.0, kappa=2.0)
    assert out.mean[0] == pytest.approx(1.0, abs=1e-12)


def test_deterministic_propagation_with_zero_uncertainty():
    rng = np.random.default_rng(3)
    A, B, d = rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), \
        rng.normal(size=3)
    model = AffineDynamics(A, B, d, W=np.zeros((3, 3)))
    law = AffineLaw(rng.normal(size=2), rng.normal(size=(2, 3)))
    mu = rng.normal(size=3)
    out = ut_propagate(GaussianState(mu, np.zeros((3, 3))), model, law)
    assert np.allclose(out.mean, model.mean(mu, law(mu)), atol=1e-8)
    assert np.allclose(out.cov, 0.0, atol=1e-8)


def test_output_covariance_is_symmetric_psd():
    rng = np.random.default_rng(21)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        model = AffineDynamics(rng.normal(size=(n, n)),
                               rng.normal(size=(n, 1)),
                               W=random_psd(rng, n, 0.1))
        state = GaussianState(rng.normal(size=n), random_psd(rng, n))
        out = ut_propagate(state, model, zero_law(1, n))
        assert np.array_equal(out.cov, out.cov.T)
        assert np.linalg.eigvalsh(out.cov)[0] >= -1e-12


def test_noise_increment_passes_straight_through():
    rng = np.random.default_rng(31)
    n = 3
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, 2))
    W = random_psd(rng, n, 0.2)
    delta = random_psd(rng, n, 0.5)
    state = GaussianState(rng.normal(size=n), random_psd(rng, n))
    law = zero_law(2, n)
    base = ut_propagate(state, AffineDynamics(A, B, W=W), law)
    bumped = ut_propagate(state, AffineDynamics(A, B, W=W + delta), law)
    assert np.allclose(bumped.cov - base.cov, delta, atol=1e-12)


def test_state_validation():
    with pytest.raises(ValueError, match="symmetric"):
        GaussianState([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="semidefinite"):
        GaussianState([0.0], [[-1.0]])
