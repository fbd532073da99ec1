"""Exact and sparse variational Gaussian process regression.

Single-output exact GPs serve as the reference implementation; the sparse
variational model (inducing points, Gaussian variational posterior, evidence
lower bound maximized with a stochastic adaptive-moment optimizer) is what
the dynamics learning actually uses.  One independent sparse GP is kept per
output dimension.

All gradients are computed analytically; there is no autodiff dependency.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .kernels import KernelParams, gram_matrix, kernel_grad_point, kernel_matrix

LOG_2PI = math.log(2.0 * math.pi)


class GramNotPositiveDefiniteError(ValueError):
    """A kernel Gram matrix failed to factorize even after jitter."""


class TrainingDivergenceError(RuntimeError):
    """The training objective became non-finite."""


class ModelFormatError(ValueError):
    """A serialized model file does not match the documented schema."""


# ---------------------------------------------------------------------------
# containers


@dataclass
class Dataset:
    """Regression data: inputs X (N, n) and outputs Y (N, D)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        self.Y = Y
        if self.X.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if self.Y.shape[0] != self.X.shape[0]:
            raise ValueError("X and Y row counts differ")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains NaN or Inf entries")

    @property
    def size(self):
        return self.X.shape[0]

    @property
    def input_dim(self):
        return self.X.shape[1]

    @property
    def output_dim(self):
        return self.Y.shape[1]

    def subset(self, idx):
        return Dataset(self.X[idx], self.Y[idx])


@dataclass
class VariationalParams:
    """Inducing locations Z plus the Gaussian posterior q(u) = N(m, C C^T)."""

    inducing: np.ndarray       # (M, n)
    mean: np.ndarray           # (M,)
    cov_factor: np.ndarray     # (M, M) lower triangular, positive diagonal

    def __post_init__(self):
        self.inducing = np.atleast_2d(np.asarray(self.inducing, dtype=float))
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.cov_factor = np.asarray(self.cov_factor, dtype=float)
        M = self.inducing.shape[0]
        if M < 1:
            raise ValueError("at least one inducing point is required")
        if self.mean.size != M or self.cov_factor.shape != (M, M):
            raise ValueError("variational parameter shapes are inconsistent")
        if np.any(np.triu(self.cov_factor, 1) != 0.0):
            raise ValueError("cov_factor must be lower triangular")
        if np.any(np.diag(self.cov_factor) <= 0.0):
            raise ValueError("cov_factor diagonal must be strictly positive")

    @property
    def num_inducing(self):
        return self.inducing.shape[0]

    @property
    def cov(self):
        return self.cov_factor @ self.cov_factor.T


@dataclass
class SvgpModel:
    """Trained multi-output sparse variational GP with a zero prior mean.

    ``kernels[d]`` and ``variational[d]`` hold the hyperparameters and the
    variational distribution of output d.  ``jitter_scale`` multiplies the
    signal variance to form the diagonal jitter used in every factorization;
    it is part of the model because predictions depend on it.
    """

    input_dim: int
    kernels: list
    variational: list
    jitter_scale: float = 1e-6

    def __post_init__(self):
        if len(self.kernels) != len(self.variational) or not self.kernels:
            raise ValueError("one kernel and one variational block per output")
        for kp, vp in zip(self.kernels, self.variational):
            if kp.input_dim != self.input_dim:
                raise ValueError("kernel lengthscale count != input_dim")
            if vp.inducing.shape[1] != self.input_dim:
                raise ValueError("inducing point dimension != input_dim")

    @property
    def output_dim(self):
        return len(self.kernels)


@dataclass
class ExactGpPosterior:
    """Single-output exact GP posterior: Cholesky of K + noise and weights."""

    data: Dataset
    params: KernelParams
    chol: np.ndarray     # lower Cholesky factor of k(X,X) + jitter + noise
    weights: np.ndarray  # solves (k(X,X) + jitter + noise) w = y
    jitter_scale: float


# ---------------------------------------------------------------------------
# exact GP


def _noisy_gram(data, params, jitter_scale):
    K = gram_matrix(params, data.X, jitter_scale)
    K[np.diag_indices_from(K)] += params.noise_variance
    return K


def _chol_or_raise(K, what):
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(K)[0])
        raise GramNotPositiveDefiniteError(
            f"{what} is not positive definite after jitter "
            f"(smallest eigenvalue {smallest:.3e})"
        ) from None


def exact_gp_fit(data, params, jitter_scale=1e-6):
    """Condition a single-output exact GP on ``data`` (zero prior mean)."""
    if data.output_dim != 1:
        raise ValueError("exact GP handles a single output column")
    K = _noisy_gram(data, params, jitter_scale)
    L = _chol_or_raise(K, "the training Gram matrix")
    y = data.Y[:, 0]
    w = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    return ExactGpPosterior(data, params, L, w, jitter_scale)


def exact_gp_predict(post, xstar):
    """Posterior mean and variance at one query point.

    The variance is the posterior variance of the latent function value;
    negative round-off is floored at zero.
    """
    k_star = kernel_matrix(post.params, np.atleast_2d(xstar), post.data.X)[0]
    mean = float(k_star @ post.weights)
    v = solve_triangular(post.chol, k_star, lower=True)
    var = post.params.signal_variance - float(v @ v)
    return mean, max(var, 0.0)


def exact_gp_nll(data, params, jitter_scale=1e-6):
    """Negative log marginal likelihood of a single-output dataset."""
    if data.output_dim != 1:
        raise ValueError("exact GP handles a single output column")
    K = _noisy_gram(data, params, jitter_scale)
    L = _chol_or_raise(K, "the training Gram matrix")
    y = data.Y[:, 0]
    a = solve_triangular(L, y, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return 0.5 * (float(a @ a) + logdet + data.size * LOG_2PI)


# ---------------------------------------------------------------------------
# sparse variational GP: prediction


def _output_predictor(model, d):
    """Per-output cached quantities: Kzz factor, alpha, quadratic form."""
    kp = model.kernels[d]
    vp = model.variational[d]
    Kzz = gram_matrix(kp, vp.inducing, model.jitter_scale)
    L = _chol_or_raise(Kzz, f"k(Z,Z) for output {d}")
    cho = (L, True)
    alpha = cho_solve(cho, vp.mean)
    inner = Kzz - vp.cov
    Pmat = cho_solve(cho, cho_solve(cho, inner).T)
    return kp, vp, alpha, Pmat


def _predict_output(cache, X):
    """Mean/variance of one output at the rows of X, given cached factors.

    This is the single implementation behind every prediction surface so
    that e.g. the dynamics wrapper reproduces :func:`svgp_predict` floats
    exactly.
    """
    kp, vp, alpha, Pmat = cache
    Kxz = kernel_matrix(kp, X, vp.inducing)
    mean = Kxz @ alpha
    quad = np.einsum("ij,ij->i", Kxz @ Pmat, Kxz)
    latent = np.maximum(kp.signal_variance - quad, 0.0)
    return mean, latent + kp.noise_variance


def svgp_predict_batch(model, X):
    """Predictive means and variances of y at the rows of X.

    Returns (mean, var) arrays of shape (B, D).  Variances include the
    observation noise and are floored so they never drop below it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = X.shape[0]
    mean = np.empty((B, model.output_dim))
    var = np.empty((B, model.output_dim))
    for d in range(model.output_dim):
        mean[:, d], var[:, d] = _predict_output(_output_predictor(model, d), X)
    return mean, var


def svgp_predict(model, xstar):
    """Predictive mean and variance (D-vectors) of y at a single point."""
    mean, var = svgp_predict_batch(model, np.atleast_2d(xstar))
    return mean[0], var[0]


def svgp_mean_jacobian(model, xstar):
    """Jacobian of the predictive mean: row d is d mu_d / d x at xstar."""
    x = np.asarray(xstar, dtype=float).ravel()
    J = np.empty((model.output_dim, model.input_dim))
    for d in range(model.output_dim):
        kp, vp, alpha, _ = _output_predictor(model, d)
        dK = kernel_grad_point(kp, x, vp.inducing)   # (M, n)
        J[d] = alpha @ dK
    return J


# ---------------------------------------------------------------------------
# ELBO and its analytic gradient

# Flat parameter layout, per output, in order:
#   log signal variance (1), log lengthscales (n), log noise variance (1),
#   inducing locations Z row-major (M*n), variational mean m (M),
#   cov_factor C row-major lower triangle (M*(M+1)/2) with the diagonal
#   entries stored as logs.
# Outputs are concatenated in order.


def _num_params_per_output(n, M):
    return 1 + n + 1 + M * n + M + M * (M + 1) // 2


def flatten_params(model):
    parts = []
    n = model.input_dim
    for kp, vp in zip(model.kernels, model.variational):
        M = vp.num_inducing
        tril = vp.cov_factor[np.tril_indices(M)].copy()
        diag_pos = np.cumsum(np.arange(1, M + 1)) - 1
        tril[diag_pos] = np.log(np.diag(vp.cov_factor))
        parts.extend([
            [kp.log_signal_variance],
            kp.log_lengthscales,
            [kp.log_noise_variance],
            vp.inducing.ravel(),
            vp.mean,
            tril,
        ])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def unflatten_params(model, theta):
    """Rebuild a model of the same shape from a flat parameter vector."""
    n = model.input_dim
    kernels, variational = [], []
    pos = 0
    for vp_old in model.variational:
        M = vp_old.num_inducing
        take = lambda k: theta[pos:pos + k]  # noqa: E731
        log_sf2 = float(take(1)[0]); pos += 1
        log_ls = take(n).copy(); pos += n
        log_se2 = float(take(1)[0]); pos += 1
        Z = take(M * n).reshape(M, n).copy(); pos += M * n
        m = take(M).copy(); pos += M
        tril = take(M * (M + 1) // 2).copy(); pos += M * (M + 1) // 2
        C = np.zeros((M, M))
        C[np.tril_indices(M)] = tril
        diag = np.exp(np.diag(C).copy())
        C[np.diag_indices(M)] = diag
        kernels.append(KernelParams(log_sf2, log_ls, log_se2))
        variational.append(VariationalParams(Z, m, C))
    if pos != theta.size:
        raise ValueError("flat parameter vector has the wrong length")
    return SvgpModel(n, kernels, variational, model.jitter_scale)


def _per_output_value_grad(kp, vp, X, y, scale, jitter_scale, want_grad):
    """ELBO contribution of one output on one batch, and its gradient.

    ``scale`` is N/B, the minibatch inflation factor on the data term.
    Returns (value, grad_dict or None).
    """
    M = vp.num_inducing
    B = X.shape[0]
    sf2 = kp.signal_variance
    se2 = kp.noise_variance
    Z = vp.inducing
    m = vp.mean
    C = vp.cov_factor

    Kzz = gram_matrix(kp, Z, jitter_scale)
    L = _chol_or_raise(Kzz, "k(Z,Z)")
    cho = (L, True)
    Kxz = kernel_matrix(kp, X, Z)
    A = cho_solve(cho, Kxz.T).T           # (B, M) = Kxz Kzz^{-1}
    S = C @ C.T
    P = Kzz - S
    AP = A @ P
    sdiag = sf2 - np.einsum("ij,ij->i", A, AP)
    mu = A @ m
    r = y - mu

    quad = float(r @ r) + float(np.sum(sdiag))
    data = scale * (-0.5 * B * (LOG_2PI + math.log(se2)) - quad / (2.0 * se2))

    Kzz_inv_m = cho_solve(cho, m)
    Kzz_inv_S = cho_solve(cho, S)
    logdet_K = 2.0 * float(np.sum(np.log(np.diag(L))))
    logdet_S = 2.0 * float(np.sum(np.log(np.diag(C))))
    kl = 0.5 * (
        float(np.trace(Kzz_inv_S)) + float(m @ Kzz_inv_m) - M
        + logdet_K - logdet_S
    )
    value = data - kl
    if not want_grad:
        return value, None

    c1 = scale / (2.0 * se2)
    g_mu = (scale / se2) * r
    G_A = np.outer(g_mu, m) + 2.0 * c1 * AP
    Gbar_P = c1 * (A.T @ A)

    Kzz_inv = cho_solve(cho, np.eye(M))
    Cinv = solve_triangular(C, np.eye(M), lower=True)
    S_inv = Cinv.T @ Cinv

    grad_m = A.T @ g_mu - Kzz_inv_m
    Gbar_S = -Gbar_P - 0.5 * (Kzz_inv - S_inv)
    grad_C = 2.0 * (Gbar_S @ C)
    grad_C[np.triu_indices(M, 1)] = 0.0
    grad_C[np.diag_indices(M)] *= np.diag(C)   # chain through exp on the diag

    Gbar_Kxz = G_A @ Kzz_inv
    Gbar_Kzz = (
        Gbar_P
        - 0.5 * (Kzz_inv - Kzz_inv_S @ Kzz_inv - np.outer(Kzz_inv_m, Kzz_inv_m))
        - A.T @ G_A @ Kzz_inv
    )

    W_xz = Gbar_Kxz * Kxz
    W_zz = Gbar_Kzz * Kzz
    ls2 = kp.lengthscales**2

    grad_log_sf2 = (
        float(np.sum(W_xz)) + float(np.sum(W_zz)) - B * c1 * sf2
    )
    grad_log_se2 = scale * (-0.5 * B + quad / (2.0 * se2))

    # lengthscales: sum_ij W_ij * (delta_a)^2 / l_a^2 for both kernel blocks
    rx = np.sum(W_xz, axis=1)
    cz = np.sum(W_xz, axis=0)
    grad_log_ls = np.empty_like(ls2)
    Wzz_sym = W_zz + W_zz.T
    rz = np.sum(Wzz_sym, axis=1)
    for a in range(ls2.size):
        xa = X[:, a]
        za = Z[:, a]
        xz = (
            float(rx @ xa**2)
            - 2.0 * float(xa @ W_xz @ za)
            + float(cz @ za**2)
        )
        zz = float(rz @ za**2) - float(za @ Wzz_sym @ za)
        grad_log_ls[a] = (xz + zz) / ls2[a]

    grad_Z = (W_xz.T @ X - Z * cz[:, None]) / ls2[None, :]
    grad_Z += (Wzz_sym @ Z - Z * rz[:, None]) / ls2[None, :]

    grads = {
        "log_sf2": grad_log_sf2,
        "log_ls": grad_log_ls,
        "log_se2": grad_log_se2,
        "Z": grad_Z,
        "m": grad_m,
        "C": grad_C,
    }
    return value, grads


def _elbo_impl(model, batch, full_data_size, want_grad):
    if batch.size < 1:
        raise ValueError("batch must be non-empty")
    if full_data_size < batch.size:
        raise ValueError("full_data_size must be >= batch size")
    if batch.output_dim != model.output_dim:
        raise ValueError("batch output count != model output count")
    if batch.input_dim != model.input_dim:
        raise ValueError("batch input dimension != model input dimension")
    scale = full_data_size / batch.size
    total = 0.0
    grad_parts = []
    for d in range(model.output_dim):
        value, grads = _per_output_value_grad(
            model.kernels[d], model.variational[d],
            batch.X, batch.Y[:, d], scale, model.jitter_scale, want_grad,
        )
        total += value
        if want_grad:
            M = model.variational[d].num_inducing
            tril = grads["C"][np.tril_indices(M)]
            grad_parts.extend([
                [grads["log_sf2"]],
                grads["log_ls"],
                [grads["log_se2"]],
                grads["Z"].ravel(),
                grads["m"],
                tril,
            ])
    if not want_grad:
        return total, None
    grad = np.concatenate([np.asarray(p, dtype=float) for p in grad_parts])
    return total, grad


def elbo(model, batch, full_data_size):
    """Minibatch evidence lower bound with the N/B data-term scaling."""
    value, _ = _elbo_impl(model, batch, full_data_size, want_grad=False)
    return value


def elbo_gradient(model, batch, full_data_size):
    """Analytic gradient of :func:`elbo` in the flat parameter layout."""
    _, grad = _elbo_impl(model, batch, full_data_size, want_grad=True)
    return grad


def elbo_value_and_gradient(model, batch, full_data_size):
    return _elbo_impl(model, batch, full_data_size, want_grad=True)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    """Settings for :func:`svgp_train`.

    The optimizer is the standard adaptive-moment scheme; the defaults
    (step 1e-2, decays 0.9/0.999, epsilon 1e-8) are the usual ones.
    """

    num_inducing: int
    batch_size: int
    iterations: int
    step_size: float = 1e-2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shared_inducing: bool = False
    jitter_scale: float = 1e-6
    eval_every: int = 0   # 0 -> max(1, iterations // 25)


def _initial_model(data, config, rng):
    n = data.input_dim
    D = data.output_dim
    ls = np.std(data.X, axis=0)
    ls[ls == 0.0] = 1.0
    log_ls = np.log(ls)
    shared_idx = None
    if config.shared_inducing:
        shared_idx = rng.choice(data.size, size=config.num_inducing,
                                replace=False)
    kernels, variational = [], []
    for d in range(D):
        var_y = float(np.var(data.Y[:, d]))
        if var_y <= 0.0:
            var_y = 1.0
        kernels.append(KernelParams(
            log_signal_variance=math.log(var_y),
            log_lengthscales=log_ls.copy(),
            log_noise_variance=math.log(0.01 * var_y),
        ))
        if shared_idx is None:
            idx = rng.choice(data.size, size=config.num_inducing,
                             replace=False)
        else:
            idx = shared_idx
        variational.append(VariationalParams(
            inducing=data.X[idx].copy(),
            mean=np.zeros(config.num_inducing),
            cov_factor=0.5 * np.eye(config.num_inducing),
        ))
    return SvgpModel(n, kernels, variational, config.jitter_scale)


def _minibatch_indices(n_data, batch_size, iterations, rng):
    """Deterministic shuffled minibatch stream: new permutation per epoch."""
    produced = 0
    while produced < iterations:
        perm = rng.permutation(n_data)
        for start in range(0, n_data, batch_size):
            if produced >= iterations:
                return
            yield perm[start:start + batch_size]
            produced += 1


def svgp_train(data, config):
    """Fit a multi-output sparse variational GP by maximizing the ELBO.

    Training is bit-reproducible for a fixed seed: the inducing-point
    subsample, the minibatch shuffle stream, and the evaluation cadence all
    derive from one seeded generator.  The returned model is the iterate
    with the best full-batch ELBO among those evaluated (the initial model
    included), so the result never regresses below the starting bound.
    """
    if config.num_inducing < 1:
        raise ValueError("num_inducing must be positive")
    if config.num_inducing > data.size:
        raise ValueError("num_inducing cannot exceed the dataset size")
    if config.batch_size < 1 or config.batch_size > data.size:
        raise ValueError("batch_size must be in [1, N]")
    rng = np.random.default_rng(config.seed)
    model = _initial_model(data, config, rng)
    theta = flatten_params(model)

    eval_every = config.eval_every or max(1, config.iterations // 25)
    best_value = elbo(model, data, data.size)
    best_theta = theta.copy()

    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    for it, idx in enumerate(
        _minibatch_indices(data.size, config.batch_size,
                           config.iterations, rng)
    ):
        batch = data.subset(idx)
        current = unflatten_params(model, theta)
        value, grad = elbo_value_and_gradient(current, batch, data.size)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingDivergenceError(
                f"objective became non-finite at iteration {it}"
            )
        # ascent on the bound
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad * grad
        bias1 = 1.0 - config.beta1 ** (it + 1)
        bias2 = 1.0 - config.beta2 ** (it + 1)
        theta = theta + config.step_size * (m1 / bias1) / (
            np.sqrt(m2 / bias2) + config.epsilon
        )
        if (it + 1) % eval_every == 0 or it + 1 == config.iterations:
            candidate = unflatten_params(model, theta)
            full = elbo(candidate, data, data.size)
            if full > best_value:
                best_value = full
                best_theta = theta.copy()
    return unflatten_params(model, best_theta)


# ---------------------------------------------------------------------------
# serialization
#
# Plain text, one field per line: "name value [value ...]".  Floats are
# rendered as C99 hex literals, which round-trip binary64 exactly.  Schema:
#
#   gpsteer-model-v1
#   n <int>
#   D <int>
#   jitter_scale <hex>
#   output <d>              (repeated D times, d = 0..D-1, followed by:)
#   M <int>
#   log_signal_variance <hex>
#   log_lengthscales <hex> x n
#   log_noise_variance <hex>
#   Z <hex> x M*n           (row-major)
#   m <hex> x M
#   C <hex> x M*(M+1)/2     (row-major lower triangle, actual values)


def _fmt(values):
    return " ".join(float(v).hex() for v in np.atleast_1d(values))


def model_save(model, path):
    lines = [
        "gpsteer-model-v1",
        f"n {model.input_dim}",
        f"D {model.output_dim}",
        f"jitter_scale {_fmt(model.jitter_scale)}",
    ]
    for d, (kp, vp) in enumerate(zip(model.kernels, model.variational)):
        M = vp.num_inducing
        lines.extend([
            f"output {d}",
            f"M {M}",
            f"log_signal_variance {_fmt(kp.log_signal_variance)}",
            f"log_lengthscales {_fmt(kp.log_lengthscales)}",
            f"log_noise_variance {_fmt(kp.log_noise_variance)}",
            f"Z {_fmt(vp.inducing.ravel())}",
            f"m {_fmt(vp.mean)}",
            f"C {_fmt(vp.cov_factor[np.tril_indices(M)])}",
        ])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class _FieldReader:
    def __init__(self, path):
        with open(path, "r", encoding="ascii") as fh:
            self.lines = [ln.strip() for ln in fh if ln.strip()]
        self.pos = 0

    def take(self, name, count=1, kind=float):
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"missing field '{name}'")
        parts = self.lines[self.pos].split()
        if parts[0] != name:
            raise ModelFormatError(
                f"expected field '{name}', found '{parts[0]}'"
            )
        values = parts[1:]
        if len(values) != count:
            raise ModelFormatError(
                f"field '{name}' has {len(values)} values, expected {count}"
            )
        self.pos += 1
        try:
            if kind is float:
                return np.array([float.fromhex(v) for v in values])
            return np.array([int(v) for v in values])
        except ValueError as exc:
            raise ModelFormatError(f"field '{name}': {exc}") from None


def model_load(path):
    r = _FieldReader(path)
    if r.pos >= len(r.lines) or r.lines[0] != "gpsteer-model-v1":
        raise ModelFormatError("missing 'gpsteer-model-v1' header")
    r.pos = 1
    n = int(r.take("n", 1, int)[0])
    D = int(r.take("D", 1, int)[0])
    if n < 1 or D < 1:
        raise ModelFormatError("fields 'n' and 'D' must be positive")
    jitter = float(r.take("jitter_scale")[0])
    kernels, variational = [], []
    for d in range(D):
        tag = int(r.take("output", 1, int)[0])
        if tag != d:
            raise ModelFormatError(f"field 'output': expected index {d}")
        M = int(r.take("M", 1, int)[0])
        if M < 1:
            raise ModelFormatError("field 'M' must be positive")
        log_sf2 = float(r.take("log_signal_variance")[0])
        log_ls = r.take("log_lengthscales", n)
        log_se2 = float(r.take("log_noise_variance")[0])
        Z = r.take("Z", M * n).reshape(M, n)
        m = r.take("m", M)
        tril = r.take("C", M * (M + 1) // 2)
        C = np.zeros((M, M))
        C[np.tril_indices(M)] = tril
        kernels.append(KernelParams(log_sf2, log_ls, log_se2))
        try:
            variational.append(VariationalParams(Z, m, C))
        except ValueError as exc:
            raise ModelFormatError(f"field 'C': {exc}") from None
    if r.pos != len(r.lines):
        raise ModelFormatError(f"unexpected trailing field "
                               f"'{r.lines[r.pos].split()[0]}'")
    return SvgpModel(n, kernels, variational, jitter)
