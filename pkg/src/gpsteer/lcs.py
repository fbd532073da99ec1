"""One linearized covariance-steering solve.

Over a horizon of H steps of the affine model z' = A z + B u + d with
additive noise of covariance W, the control policy is parameterized as

    u_j = v_j + Lam_j (z_0 - mu_0) + sum_{i<j} Theta_{j,i} w_i

(affine feedback on the initial-state deviation and on past disturbance
realizations), which is causally equivalent to affine state-history
feedback and makes both subproblems convex:

- the terminal-mean constraint depends only on the feedforward V, and the
  expected control energy separates, so the optimal V is the minimum-norm
  solution of one linear system;
- the terminal-covariance constraint depends only on (Lam, Theta) through
  S = [E_T (Gamma + Hu Lam) Sigma^1/2,  E_T (Hu Theta + Hw) Wbar^1/2] and
  the requirement Sigma_goal - S S' >= 0, written as the Schur-complement
  LMI [[Sigma_goal, S], [S', I]] >= 0 with cost tr(Lam Sigma Lam') +
  tr(Theta Wbar Theta'), an LmiQpProblem solved by :mod:`gpsteer.sdp`.

Only the first law ever reaches the plant in the greedy loop; it depends
on z alone because the first block-row of Theta is identically zero.
"""

from dataclasses import dataclass

import numpy as np

from .sdp import LmiQpProblem, RankTwoLmi, SolveStatus, solve
from .ut import AffineLaw


class UnreachableError(RuntimeError):
    """The terminal mean cannot be reached over this horizon."""


class SteeringInfeasibleError(RuntimeError):
    """The target covariance is too tight for the horizon and noise."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalFailureError(RuntimeError):
    """The covariance subproblem solver broke down."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SteeringTarget:
    """Goal terminal mean and covariance (positive definite)."""

    mean_goal: np.ndarray
    cov_goal: np.ndarray

    def __post_init__(self):
        self.mean_goal = np.asarray(self.mean_goal, dtype=float).ravel()
        self.cov_goal = np.asarray(self.cov_goal, dtype=float)
        n = self.mean_goal.size
        if self.cov_goal.shape != (n, n):
            raise ValueError("goal covariance shape does not match the mean")
        if not np.allclose(self.cov_goal, self.cov_goal.T, atol=1e-12):
            raise ValueError("goal covariance must be symmetric")
        if np.linalg.eigvalsh(self.cov_goal)[0] <= 0.0:
            raise ValueError("goal covariance must be positive definite")


@dataclass
class HorizonBlocks:
    """Stacked H-step dynamics: E[Z] = Gamma mu + Hu V + offset, where Z
    collects z_0..z_H, and the disturbance enters through Hw."""

    horizon: int
    n_state: int
    n_input: int
    Gamma: np.ndarray    # ((H+1) nz, nz)
    Hu: np.ndarray       # ((H+1) nz, H nu)
    Hw: np.ndarray       # ((H+1) nz, H nz)
    offset: np.ndarray   # ((H+1) nz,) = Hw (1 (x) d)

    def terminal_rows(self, M):
        return M[self.horizon * self.n_state:, :]


@dataclass
class PolicyParams:
    """Full multi-step policy: feedforward V, initial-state feedback Lam,
    strictly block-lower-triangular disturbance feedback Theta."""

    V: np.ndarray        # (H nu,)
    Lam: np.ndarray      # (H nu, nz)
    Theta: np.ndarray    # (H nu, H nz)

    def inputs_for(self, mu0, z0, noises):
        """Realized inputs over the horizon, one row per step."""
        H = noises.shape[0]
        nu = self.V.size // H
        w_flat = noises.ravel()
        u = self.V + self.Lam @ (z0 - mu0) + self.Theta @ w_flat
        return u.reshape(H, nu)


@dataclass
class LcsSolution:
    first_law: AffineLaw
    policy: PolicyParams
    terminal_mean: np.ndarray
    terminal_cov: np.ndarray
    report: object


def build_blocks(lin, horizon):
    """Stack the affine recursion z_{j+1} = A z_j + B u_j + d + w_j."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    A, B, d = lin.A, lin.B, lin.d
    nz, nu = B.shape
    H = horizon
    Gamma = np.zeros(((H + 1) * nz, nz))
    Hu = np.zeros(((H + 1) * nz, H * nu))
    Hw = np.zeros(((H + 1) * nz, H * nz))
    powers = [np.eye(nz)]
    for _ in range(H):
        powers.append(A @ powers[-1])
    for j in range(H + 1):
        Gamma[j * nz:(j + 1) * nz] = powers[j]
        for i in range(j):
            blk = powers[j - 1 - i]
            Hu[j * nz:(j + 1) * nz, i * nu:(i + 1) * nu] = blk @ B
            Hw[j * nz:(j + 1) * nz, i * nz:(i + 1) * nz] = blk
    offset = Hw @ np.tile(d, H)
    return HorizonBlocks(H, nz, nu, Gamma, Hu, Hw, offset)


def solve_mean(blocks, mu_t, mu_goal):
    """Minimum-energy feedforward hitting the terminal mean exactly."""
    mu_t = np.asarray(mu_t, dtype=float).ravel()
    mu_goal = np.asarray(mu_goal, dtype=float).ravel()
    nz = blocks.n_state
    ET_Hu = blocks.terminal_rows(blocks.Hu)
    rhs = mu_goal - blocks.terminal_rows(blocks.Gamma) @ mu_t \
        - blocks.offset[blocks.horizon * nz:]
    V, _, rank, _ = np.linalg.lstsq(ET_Hu, rhs, rcond=None)
    if rank < nz:
        raise UnreachableError(
            f"terminal map has row rank {rank} < {nz}: "
            "the goal mean is not reachable over this horizon"
        )
    return V


def psd_sqrt(M):
    """Symmetric PSD square root; negative eigenvalues are clipped to 0."""
    M = 0.5 * (M + np.asarray(M, dtype=float).T)
    vals, vecs = np.linalg.eigh(M)
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def _variable_index(blocks, feedback_depth):
    """Enumerate the free entries of (Lam, Theta).

    Returns (lam_entries, theta_entries) as lists of flat coordinates:
    lam entry = (row a, state column b); theta entry = (row a, disturbance
    coordinate c) kept only for causally allowed blocks within the
    feedback-depth cap.
    """
    H, nz, nu = blocks.horizon, blocks.n_state, blocks.n_input
    lam_entries = [(a, b) for a in range(H * nu) for b in range(nz)]
    theta_entries = []
    for a in range(H * nu):
        j = a // nu     # input block (time step within the horizon)
        for i in range(j):
            if feedback_depth is not None and j - i > feedback_depth:
                continue
            for bi in range(nz):
                theta_entries.append((a, i * nz + bi))
    return lam_entries, theta_entries


def _assemble_covariance_problem(blocks, Sigma_t, W, Sigma_goal,
                                 feedback_depth):
    H, nz, nu = blocks.horizon, blocks.n_state, blocks.n_input
    m2 = nz + H * nz
    s = nz + m2
    ET_Gamma = blocks.terminal_rows(blocks.Gamma)
    ET_Hu = blocks.terminal_rows(blocks.Hu)
    ET_Hw = blocks.terminal_rows(blocks.Hw)

    sig_half = psd_sqrt(Sigma_t)
    w_half = psd_sqrt(W)
    wbar_half = np.kron(np.eye(H), w_half)

    S0 = np.hstack([ET_Gamma @ sig_half, ET_Hw @ wbar_half])
    F0 = np.zeros((s, s))
    F0[:nz, :nz] = Sigma_goal
    F0[:nz, nz:] = S0
    F0[nz:, :nz] = S0.T
    F0[nz:, nz:] = np.eye(m2)

    # u vectors live in the first nz coordinates, v vectors in the last m2
    u_pool = np.zeros((H * nu, s))
    u_pool[:, :nz] = ET_Hu.T
    v_pool = np.zeros((m2, s))
    v_pool[:nz, nz:nz + nz] = sig_half
    v_pool[nz:, nz + nz:] = wbar_half

    lam_entries, theta_entries = _variable_index(blocks, feedback_depth)
    # drop variables whose LMI column vector is identically zero (zero
    # noise rows): they influence neither the constraint nor the cost
    theta_entries = [
        (a, c) for (a, c) in theta_entries
        if np.any(wbar_half[c] != 0.0)
    ]
    lam_entries = [
        (a, b) for (a, b) in lam_entries if np.any(sig_half[b] != 0.0)
    ]
    p = len(lam_entries) + len(theta_entries)
    u_index = np.empty(p, dtype=int)
    v_index = np.empty(p, dtype=int)
    for k, (a, b) in enumerate(lam_entries):
        u_index[k] = a
        v_index[k] = b
    off = len(lam_entries)
    for k, (a, c) in enumerate(theta_entries):
        u_index[off + k] = a
        v_index[off + k] = nz + c
    lmi = RankTwoLmi(F0, u_pool, v_pool, u_index, v_index)

    # cost tr(Lam Sigma Lam') + tr(Theta Wbar Theta') as 0.5 x'Qx
    Q = np.zeros((p, p))
    lam_pos = {e: k for k, e in enumerate(lam_entries)}
    theta_pos = {e: off + k for k, e in enumerate(theta_entries)}
    for (a, b), k in lam_pos.items():
        for b2 in range(nz):
            k2 = lam_pos.get((a, b2))
            if k2 is not None:
                Q[k, k2] = 2.0 * Sigma_t[b, b2]
    for (a, c), k in theta_pos.items():
        i, bi = divmod(c, nz)
        for b2 in range(nz):
            k2 = theta_pos.get((a, i * nz + b2))
            if k2 is not None:
                Q[k, k2] = 2.0 * W[bi, b2]
    prob = LmiQpProblem(Q, np.zeros(p), lmi)
    layout = (lam_entries, theta_entries)
    return prob, layout


def _deadbeat_start(blocks, prob, layout):
    """Heuristic strictly feasible start: cancel the terminal effect of the
    initial deviation exactly and of each disturbance as far as causality
    allows.  Returns the flat start or None if it is not strictly feasible.
    """
    H, nz, nu = blocks.horizon, blocks.n_state, blocks.n_input
    ET_Gamma = blocks.terminal_rows(blocks.Gamma)
    ET_Hu = blocks.terminal_rows(blocks.Hu)
    ET_Hw = blocks.terminal_rows(blocks.Hw)
    Lam = np.linalg.lstsq(ET_Hu, -ET_Gamma, rcond=None)[0]
    Theta = np.zeros((H * nu, H * nz))
    for i in range(H):
        cols = slice((i + 1) * nu, H * nu)
        M = ET_Hu[:, cols]
        if M.shape[1] == 0:
            continue
        target = -ET_Hw[:, i * nz:(i + 1) * nz]
        X = np.linalg.lstsq(M, target, rcond=None)[0]
        Theta[cols, i * nz:(i + 1) * nz] = X
    lam_entries, theta_entries = layout
    x0 = np.empty(prob.dim)
    for k, (a, b) in enumerate(lam_entries):
        x0[k] = Lam[a, b]
    off = len(lam_entries)
    for k, (a, c) in enumerate(theta_entries):
        x0[off + k] = Theta[a, c]
    try:
        np.linalg.cholesky(prob.lmi.eval(x0))
    except np.linalg.LinAlgError:
        return None
    return x0


def solve_covariance(blocks, Sigma_t, W, Sigma_goal, solver_tol=1e-7,
                     feedback_depth=None):
    """Minimum-energy feedback meeting the terminal covariance bound.

    Returns (Lam, Theta, report); raises SteeringInfeasibleError when no
    policy can satisfy the bound, NumericalFailureError on breakdown.
    """
    Sigma_t = np.asarray(Sigma_t, dtype=float)
    W = np.asarray(W, dtype=float)
    Sigma_goal = np.asarray(Sigma_goal, dtype=float)
    prob, layout = _assemble_covariance_problem(
        blocks, Sigma_t, W, Sigma_goal, feedback_depth
    )
    x0 = _deadbeat_start(blocks, prob, layout)
    report = solve(prob, tol=solver_tol, x0=x0)
    if report.status is SolveStatus.INFEASIBLE:
        raise SteeringInfeasibleError(
            "terminal covariance bound is infeasible for this horizon "
            "and noise level", report,
        )
    if report.status is SolveStatus.NUMERICAL_FAILURE:
        raise NumericalFailureError(
            "covariance subproblem solver broke down", report,
        )
    H, nz, nu = blocks.horizon, blocks.n_state, blocks.n_input
    lam_entries, theta_entries = layout
    Lam = np.zeros((H * nu, nz))
    Theta = np.zeros((H * nu, H * nz))
    for k, (a, b) in enumerate(lam_entries):
        Lam[a, b] = report.x[k]
    off = len(lam_entries)
    for k, (a, c) in enumerate(theta_entries):
        Theta[a, c] = report.x[off + k]
    return Lam, Theta, report


def closed_loop_terminal_moments(blocks, policy, mu_t, Sigma_t, W):
    """Exact terminal mean/covariance of the policy on the affine model."""
    nz = blocks.n_state
    H = blocks.horizon
    ET_Gamma = blocks.terminal_rows(blocks.Gamma)
    ET_Hu = blocks.terminal_rows(blocks.Hu)
    ET_Hw = blocks.terminal_rows(blocks.Hw)
    mean = ET_Gamma @ mu_t + ET_Hu @ policy.V \
        + blocks.offset[H * nz:]
    G1 = ET_Gamma + ET_Hu @ policy.Lam
    G2 = ET_Hu @ policy.Theta + ET_Hw
    Wbar = np.kron(np.eye(H), W)
    cov = G1 @ Sigma_t @ G1.T + G2 @ Wbar @ G2.T
    return mean, 0.5 * (cov + cov.T)


def lcs_solve(lin, state, target, horizon, solver_tol=1e-7,
              feedback_depth=None):
    """Full linearized covariance-steering solve at the current state.

    The first law is u = V_0 + Lam_0 (z - mu_t); the sub-horizon noise is
    held at the linearization point's W throughout.
    """
    blocks = build_blocks(lin, horizon)
    V = solve_mean(blocks, state.mean, target.mean_goal)
    Lam, Theta, report = solve_covariance(
        blocks, state.cov, lin.W, target.cov_goal,
        solver_tol=solver_tol, feedback_depth=feedback_depth,
    )
    policy = PolicyParams(V, Lam, Theta)
    nu = blocks.n_input
    K0 = Lam[:nu, :]
    law = AffineLaw(V[:nu] - K0 @ state.mean, K0)
    mean_T, cov_T = closed_loop_terminal_moments(
        blocks, policy, state.mean, state.cov, lin.W
    )
    return LcsSolution(law, policy, mean_T, cov_T, report)
