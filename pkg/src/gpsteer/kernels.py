"""Squared-exponential kernel with per-dimension (ARD) lengthscales.

All hyperparameters are stored on log scale so that optimizers can work on
an unconstrained vector; the exponentiated values are always strictly
positive.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class KernelParams:
    """SE-ARD kernel hyperparameters plus the Gaussian observation noise.

    Parameters
    ----------
    log_signal_variance : float
        log of the signal variance (kernel value at zero distance).
    log_lengthscales : ndarray, shape (n,)
        log of one lengthscale per input dimension.
    log_noise_variance : float
        log of the observation noise variance.
    """

    log_signal_variance: float
    log_lengthscales: np.ndarray
    log_noise_variance: float

    def __post_init__(self):
        self.log_lengthscales = np.atleast_1d(
            np.asarray(self.log_lengthscales, dtype=float)
        )
        if self.log_lengthscales.ndim != 1:
            raise ValueError("log_lengthscales must be a vector")
        values = np.concatenate(
            [[self.log_signal_variance, self.log_noise_variance],
             self.log_lengthscales]
        )
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel parameters must be finite")

    @property
    def input_dim(self):
        return self.log_lengthscales.size

    @property
    def signal_variance(self):
        return float(np.exp(self.log_signal_variance))

    @property
    def lengthscales(self):
        return np.exp(self.log_lengthscales)

    @property
    def noise_variance(self):
        return float(np.exp(self.log_noise_variance))


def kernel_eval(params, x, x2):
    """Evaluate k(x, x') for a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    n = params.input_dim
    if x.size != n or x2.size != n:
        raise ValueError(
            f"input dimension mismatch: kernel has {n} lengthscales, "
            f"points have sizes {x.size} and {x2.size}"
        )
    d = (x - x2) / params.lengthscales
    return params.signal_variance * float(np.exp(-0.5 * np.dot(d, d)))


def kernel_matrix(params, X1, X2):
    """Cross-covariance matrix k(X1, X2), rows of X1/X2 are points."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    n = params.input_dim
    if X1.shape[1] != n or X2.shape[1] != n:
        raise ValueError(
            f"input dimension mismatch: kernel has {n} lengthscales, "
            f"matrices have {X1.shape[1]} and {X2.shape[1]} columns"
        )
    ls = params.lengthscales
    A = X1 / ls
    B = X2 / ls
    sq = (
        np.sum(A * A, axis=1)[:, None]
        - 2.0 * A @ B.T
        + np.sum(B * B, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-0.5 * sq)


def gram_matrix(params, X, jitter_scale=1e-6):
    """k(X, X) with ``jitter_scale * signal_variance`` added to the diagonal.

    The jitter keeps Cholesky factorizations of nearly singular Gram
    matrices from failing; it scales with the signal variance so the
    safeguard is invariant to output rescaling.
    """
    K = kernel_matrix(params, X, X)
    K[np.diag_indices_from(K)] += jitter_scale * params.signal_variance
    return K


def kernel_grad_point(params, x, Z):
    """Gradients of k(x, z_j) with respect to x.

    Returns an (M, n) array whose row j is d k(x, z_j) / d x, i.e.
    ``-k(x, z_j) * (x - z_j) / lengthscales**2``.
    """
    x = np.asarray(x, dtype=float).ravel()
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    k = kernel_matrix(params, x[None, :], Z)[0]
    inv_ls2 = 1.0 / params.lengthscales**2
    return -k[:, None] * (x[None, :] - Z) * inv_ls2[None, :]
