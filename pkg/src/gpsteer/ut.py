"""Unscented transform for propagating Gaussian state summaries through a
transition model under an affine feedback law.

The noise covariance added after propagation comes from the transition
model itself, evaluated once at the current mean with the law applied to
the mean; for learned dynamics it therefore carries both process noise and
model uncertainty.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianState:
    """Mean and covariance of the uncertain state at one time step."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise ValueError("covariance shape does not match the mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric (1e-12)")
        self.cov = 0.5 * (self.cov + self.cov.T)
        if np.linalg.eigvalsh(self.cov)[0] < -1e-9:
            raise ValueError("covariance must be positive semidefinite")

    @property
    def dim(self):
        return self.mean.size


@dataclass
class AffineLaw:
    """One control law u = feedforward + gain @ z."""

    feedforward: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        self.feedforward = np.asarray(self.feedforward, dtype=float).ravel()
        self.gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
        if self.gain.shape[0] != self.feedforward.size:
            raise ValueError("gain row count must match the feedforward size")
        if not np.all(np.isfinite(self.feedforward)) or \
                not np.all(np.isfinite(self.gain)):
            raise ValueError("law entries must be finite")

    def __call__(self, z):
        return self.feedforward + self.gain @ np.asarray(z, dtype=float)


@dataclass
class SigmaPointSet:
    """2n+1 deterministic points with mean weights and covariance weights."""

    points: np.ndarray        # (2n+1, n)
    mean_weights: np.ndarray  # (2n+1,)
    cov_weights: np.ndarray   # (2n+1,)
    alpha: float
    beta: float
    kappa: float


def default_kappa(n):
    """Classical heuristic kappa = 3 - n."""
    return 3.0 - n


def _psd_cholesky(cov):
    """Cholesky with escalating diagonal jitter (1e-12 up to 1e-6)."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12
    eye = np.eye(cov.shape[0])
    while jitter <= 1e-6:
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        "state covariance is not positive semidefinite even with 1e-6 jitter"
    )


def sigma_points(state, alpha=1.0, beta=2.0, kappa=None):
    """Deterministic sample of a Gaussian: the center plus symmetric pairs
    along the columns of the scaled Cholesky factor."""
    n = state.dim
    if kappa is None:
        kappa = default_kappa(n)
    lam = alpha**2 * (n + kappa) - n
    if n + lam <= 0.0:
        raise ValueError(f"alpha^2 (n + kappa) = {n + lam + n} must exceed n")
    L = _psd_cholesky(state.cov)
    scaled = np.sqrt(n + lam) * L
    points = np.empty((2 * n + 1, n))
    points[0] = state.mean
    points[1:n + 1] = state.mean[None, :] + scaled.T
    points[n + 1:] = state.mean[None, :] - scaled.T
    gamma = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    delta = gamma.copy()
    gamma[0] = lam / (n + lam)
    delta[0] = gamma[0] + (1.0 - alpha**2 + beta)
    return SigmaPointSet(points, gamma, delta, alpha, beta, kappa)


def ut_propagate(state, model, law, alpha=1.0, beta=2.0, kappa=None):
    """Push a Gaussian state through z' = G(z, law(z)) + w for one step.

    Each sigma point is propagated through the closed loop; the output
    covariance is the weighted scatter of the propagated points plus
    W(mean, law(mean)), symmetrized, with negative eigenvalues (if any)
    floored at zero.
    """
    pts = sigma_points(state, alpha, beta, kappa)
    propagated = np.array([
        model.mean(p, law(p)) for p in pts.points
    ])
    mean = pts.mean_weights @ propagated
    centered = propagated - mean[None, :]
    cov = (centered.T * pts.cov_weights) @ centered
    cov = cov + model.noise_cov(state.mean, law(state.mean))
    cov = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] < 0.0:
        vals, vecs = np.linalg.eigh(cov)
        cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return GaussianState(mean, cov)
