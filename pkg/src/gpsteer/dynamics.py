"""Transition models and linearization.

A :class:`TransitionModel` exposes the next-state mean G(z, u), a diagonal
process-noise covariance W(z, u), analytic Jacobians of G, and noisy
sampling.  Two realizations matter here: the analytic unicycle simulator
(the "black box" that generates data and evaluates policies) and the
learned sparse-GP dynamics wrapper.  The steering stack only ever talks to
the interface.
"""

import abc
from dataclasses import dataclass

import numpy as np

from .gp import Dataset, SvgpModel, svgp_mean_jacobian, svgp_predict
from .kernels import kernel_grad_point, kernel_matrix


class TransitionModel(abc.ABC):
    """Discrete-time stochastic transition z' = G(z, u) + w, w ~ N(0, W)."""

    n_state: int
    n_input: int

    @abc.abstractmethod
    def mean(self, z, u):
        """Next-state mean G(z, u)."""

    @abc.abstractmethod
    def noise_cov(self, z, u):
        """Process-noise covariance W(z, u), diagonal PSD (n_state square)."""

    @abc.abstractmethod
    def jacobians(self, z, u):
        """(dG/dz, dG/du) evaluated at (z, u)."""

    def sample(self, z, u, rng):
        """One noisy step; the default draws w ~ N(0, W) with diagonal W."""
        std = np.sqrt(np.diag(self.noise_cov(z, u)))
        return self.mean(z, u) + std * rng.standard_normal(self.n_state)


@dataclass
class LinearizedModel:
    """Affine expansion z' ~ A z + B u + d with noise covariance W."""

    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    W: np.ndarray
    point: tuple  # (z*, u*)


@dataclass
class UnicycleParams:
    """Discretized unicycle: time step and per-state noise deviations."""

    tau: float = 0.05
    noise_std: np.ndarray = None

    def __post_init__(self):
        if self.noise_std is None:
            self.noise_std = np.array([0.02, 0.02, 0.04, 0.04])
        self.noise_std = np.asarray(self.noise_std, dtype=float).ravel()
        if self.tau <= 0.0:
            raise ValueError("time step must be positive")
        if self.noise_std.size != 4 or np.any(self.noise_std < 0.0):
            raise ValueError("noise_std must be 4 nonnegative values")


def unicycle_step(params, z, u, rng=None):
    """One unicycle transition; pass ``rng`` to add the Gaussian noise.

    State (s_x, s_y, heading, speed), input (turn rate gain, acceleration):

        s_x'     = s_x + v tau cos(heading)
        s_y'     = s_y + v tau sin(heading)
        heading' = heading + u_theta v tau
        v'       = v + u_v tau
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    sx, sy, th, v = z
    tau = params.tau
    out = np.array([
        sx + v * tau * np.cos(th),
        sy + v * tau * np.sin(th),
        th + u[0] * v * tau,
        v + u[1] * tau,
    ])
    if rng is not None:
        out += params.noise_std * rng.standard_normal(4)
    return out


class AnalyticUnicycle(TransitionModel):
    """The exact simulator, usable both as data source and as baseline."""

    n_state = 4
    n_input = 2

    def __init__(self, params=None):
        self.params = params if params is not None else UnicycleParams()

    def mean(self, z, u):
        return unicycle_step(self.params, z, u, rng=None)

    def noise_cov(self, z, u):
        return np.diag(self.params.noise_std**2)

    def jacobians(self, z, u):
        tau = self.params.tau
        _, _, th, v = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        A = np.array([
            [1.0, 0.0, -v * tau * np.sin(th), tau * np.cos(th)],
            [0.0, 1.0, v * tau * np.cos(th), tau * np.sin(th)],
            [0.0, 0.0, 1.0, u[0] * tau],
            [0.0, 0.0, 0.0, 1.0],
        ])
        B = np.array([
            [0.0, 0.0],
            [0.0, 0.0],
            [v * tau, 0.0],
            [0.0, tau],
        ])
        return A, B

    def sample(self, z, u, rng):
        return unicycle_step(self.params, z, u, rng)


class SvgpDynamics(TransitionModel):
    """Learned dynamics: G is the GP predictive mean over [z; u], and W is
    the diagonal of predictive variances (model uncertainty plus noise)."""

    def __init__(self, model: SvgpModel, n_input):
        self.model = model
        self.n_input = int(n_input)
        self.n_state = model.output_dim
        if model.input_dim != self.n_state + self.n_input:
            raise ValueError(
                "model input dimension must equal n_state + n_input"
            )
        # cache per-output factorizations; the model is immutable
        from .gp import _output_predictor

        self._cache = [
            _output_predictor(model, d) for d in range(model.output_dim)
        ]

    def _features(self, z, u):
        return np.concatenate([np.asarray(z, float).ravel(),
                               np.asarray(u, float).ravel()])

    def _moments(self, x):
        from .gp import _predict_output

        mean = np.empty(self.n_state)
        var = np.empty(self.n_state)
        for d, cache in enumerate(self._cache):
            m, v = _predict_output(cache, x[None, :])
            mean[d], var[d] = m[0], v[0]
        return mean, var

    def mean(self, z, u):
        return self._moments(self._features(z, u))[0]

    def noise_cov(self, z, u):
        return np.diag(self._moments(self._features(z, u))[1])

    def jacobians(self, z, u):
        x = self._features(z, u)
        J = np.empty((self.n_state, x.size))
        for d, (kp, vp, alpha, _) in enumerate(self._cache):
            dK = kernel_grad_point(kp, x, vp.inducing)
            J[d] = alpha @ dK
        return J[:, :self.n_state], J[:, self.n_state:]


class AffineDynamics(TransitionModel):
    """Exactly affine transitions, mainly for tests and sanity baselines."""

    def __init__(self, A, B, d=None, W=None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.n_state, self.n_input = self.B.shape
        self.d = (np.zeros(self.n_state) if d is None
                  else np.asarray(d, dtype=float))
        self.W = (np.zeros((self.n_state, self.n_state)) if W is None
                  else np.asarray(W, dtype=float))

    def mean(self, z, u):
        return self.A @ np.asarray(z, float) + self.B @ np.asarray(u, float) \
            + self.d

    def noise_cov(self, z, u):
        return self.W

    def jacobians(self, z, u):
        return self.A, self.B


def linearize(model, z_star, u_star):
    """First-order expansion of the transition mean at (z*, u*).

    The offset is chosen so that A z* + B u* + d = G(z*, u*) exactly; W is
    the model's noise covariance at the same point.
    """
    z_star = np.asarray(z_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    A, B = model.jacobians(z_star, u_star)
    g = model.mean(z_star, u_star)
    d = g - A @ z_star - B @ u_star
    W = model.noise_cov(z_star, u_star)
    return LinearizedModel(A, B, d, W, (z_star.copy(), u_star.copy()))


# ---------------------------------------------------------------------------
# data collection and the transition CSV format


@dataclass
class SampleRanges:
    """Uniform sampling box for states and inputs."""

    z_min: np.ndarray
    z_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        for name in ("z_min", "z_max", "u_min", "u_max"):
            setattr(self, name, np.asarray(getattr(self, name),
                                           dtype=float).ravel())
        if not (np.all(self.z_min < self.z_max)
                and np.all(self.u_min < self.u_max)):
            raise ValueError("sampling box must have positive volume")


def default_unicycle_ranges():
    return SampleRanges(
        z_min=np.array([-20.0, -20.0, -6.0 * np.pi, -10.0]),
        z_max=np.array([20.0, 20.0, 6.0 * np.pi, 20.0]),
        u_min=np.array([-20.0, -20.0]),
        u_max=np.array([20.0, 20.0]),
    )


def collect_dataset(params, ranges, n_samples, seed):
    """Sample transitions uniformly over the box, one noisy step each."""
    if n_samples < 1:
        raise ValueError("dataset size must be positive")
    rng = np.random.default_rng(seed)
    nz = ranges.z_min.size
    nu = ranges.u_min.size
    Z = rng.uniform(ranges.z_min, ranges.z_max, size=(n_samples, nz))
    U = rng.uniform(ranges.u_min, ranges.u_max, size=(n_samples, nu))
    Y = np.empty((n_samples, nz))
    for i in range(n_samples):
        Y[i] = unicycle_step(params, Z[i], U[i], rng)
    return Dataset(np.hstack([Z, U]), Y)


def transition_header(nz, nu):
    return (
        [f"z{i}" for i in range(nz)]
        + [f"u{i}" for i in range(nu)]
        + [f"y{i}" for i in range(nz)]
    )


def dataset_save(data, path, nz, nu):
    """Write the transition CSV: header z0..,u0..,y0.., one row per sample."""
    if data.input_dim != nz + nu or data.output_dim != nz:
        raise ValueError("dataset shape does not match nz/nu")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(transition_header(nz, nu)) + "\n")
        for i in range(data.size):
            row = [repr(float(v)) for v in data.X[i]]
            row += [repr(float(v)) for v in data.Y[i]]
            fh.write(",".join(row) + "\n")


def dataset_load(path):
    """Read a transition CSV; returns (Dataset, nz, nu)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty dataset file")
    header = lines[0].split(",")
    nz = sum(1 for c in header if c.startswith("z"))
    nu = sum(1 for c in header if c.startswith("u"))
    ny = sum(1 for c in header if c.startswith("y"))
    expected = transition_header(nz, nu)
    if ny != nz or header != expected:
        got = next((c for c, e in zip(header, expected) if c != e),
                   header[min(len(expected), len(header)) - 1])
        raise ValueError(f"unexpected dataset column '{got}'")
    rows = []
    for k, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError(f"line {k}: expected {len(header)} columns")
        rows.append([float(p) for p in parts])
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :nz + nu], arr[:, nz + nu:]), nz, nu
