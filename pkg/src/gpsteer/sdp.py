"""Barrier interior-point solver for quadratic programs with one linear
matrix inequality and optional linear equality constraints:

    minimize    0.5 x' Q x + q' x + c
    subject to  F(x) = F0 + sum_k x_k F_k  >=  0   (positive semidefinite)
                E x = e

Equalities are eliminated by a null-space parameterization, then a standard
path-following scheme minimizes t * objective - log det F(x) with damped
Newton steps, multiplying the barrier parameter by 10 per outer stage until
the duality-gap surrogate s/t (s = LMI size) drops below tolerance.  If the
start is not strictly feasible, a phase-I problem minimizes the smallest
slack sl with F(x) + sl*I >= 0 first.

Line searches never subtract two nearly equal merit values: the quadratic
part changes analytically and the barrier change is -sum log1p(alpha * w)
with w the eigenvalues of L^-1 dF L^-T, so progress around 1e-12 is still
resolved and the final centering reaches machine-accurate stationarity.

The LMI map has two interchangeable representations.  ``DenseLmi`` stores
every F_k explicitly.  ``RankTwoLmi`` stores F_k = u_k v_k' + v_k u_k' with
the u/v vectors gathered from shared row pools; the barrier gradient and
Hessian then cost O(p^2) instead of O(p^2 s^2), which is what makes the
long-horizon steering problems tractable.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class DenseLmi:
    """F(x) = F0 + sum_k x_k Fk with every coefficient matrix stored."""

    F0: np.ndarray            # (s, s)
    Fk: np.ndarray            # (p, s, s)

    def __post_init__(self):
        self.F0 = np.asarray(self.F0, dtype=float)
        self.Fk = np.asarray(self.Fk, dtype=float)
        if self.Fk.ndim != 3 or self.Fk.shape[1:] != self.F0.shape:
            raise ValueError("Fk must be (p, s, s) matching F0")
        for name, M in [("F0", self.F0[None]), ("Fk", self.Fk)]:
            if not np.allclose(M, np.swapaxes(M, -1, -2), atol=1e-9):
                raise ValueError(f"{name} blocks must be symmetric")

    @property
    def dim(self):
        return self.Fk.shape[0]

    @property
    def size(self):
        return self.F0.shape[0]

    def combo(self, coeffs):
        return np.tensordot(coeffs, self.Fk, axes=1)

    def eval(self, x):
        return self.F0 + self.combo(x)

    def barrier_gradient(self, Finv):
        # d(-logdet F)/dx_k = -tr(Finv Fk)
        return -np.einsum("ij,kij->k", Finv, self.Fk)

    def barrier_hessian(self, Finv):
        T = np.einsum("ij,kjl->kil", Finv, self.Fk)   # Finv Fk
        return np.einsum("kij,lji->kl", T, T)

    def trace_finv2(self, Finv):
        Finv2 = Finv @ Finv
        return np.einsum("ij,kij->k", Finv2, self.Fk)

    def densified(self):
        return self


@dataclass
class RankTwoLmi:
    """F(x) = F0 + sum_k x_k (u_k v_k' + v_k u_k'), u/v gathered by index.

    ``u_pool``/``v_pool`` hold the distinct row vectors; variable k uses
    u_pool[u_index[k]] and v_pool[v_index[k]].
    """

    F0: np.ndarray            # (s, s)
    u_pool: np.ndarray        # (nu, s)
    v_pool: np.ndarray        # (nv, s)
    u_index: np.ndarray       # (p,)
    v_index: np.ndarray       # (p,)

    def __post_init__(self):
        self.F0 = np.asarray(self.F0, dtype=float)
        self.u_pool = np.atleast_2d(np.asarray(self.u_pool, dtype=float))
        self.v_pool = np.atleast_2d(np.asarray(self.v_pool, dtype=float))
        self.u_index = np.asarray(self.u_index, dtype=int)
        self.v_index = np.asarray(self.v_index, dtype=int)
        if self.u_index.shape != self.v_index.shape:
            raise ValueError("index arrays must have equal length")

    @property
    def dim(self):
        return self.u_index.size

    @property
    def size(self):
        return self.F0.shape[0]

    def combo(self, coeffs):
        # accumulate sum_k c_k u_k v_k' through the (nu, nv) pool couplings
        M = np.zeros((self.u_pool.shape[0], self.v_pool.shape[0]))
        np.add.at(M, (self.u_index, self.v_index), coeffs)
        cross = self.u_pool.T @ M @ self.v_pool
        return cross + cross.T

    def eval(self, x):
        return self.F0 + self.combo(x)

    def barrier_gradient(self, Finv):
        G = self.u_pool @ Finv @ self.v_pool.T
        return -2.0 * G[self.u_index, self.v_index]

    def barrier_hessian(self, Finv):
        FU = Finv @ self.u_pool.T
        FV = Finv @ self.v_pool.T
        G = self.u_pool @ FV       # (nu, nv)
        P = self.u_pool @ FU       # (nu, nu)
        R = self.v_pool @ FV       # (nv, nv)
        C = G[np.ix_(self.u_index, self.v_index)]
        H = C * C.T
        H += P[np.ix_(self.u_index, self.u_index)] \
            * R[np.ix_(self.v_index, self.v_index)]
        H *= 2.0
        return H

    def trace_finv2(self, Finv):
        Finv2 = Finv @ Finv
        G2 = self.u_pool @ Finv2 @ self.v_pool.T
        return 2.0 * G2[self.u_index, self.v_index]

    def densified(self):
        p, s = self.dim, self.size
        Fk = np.empty((p, s, s))
        for k in range(p):
            outer = np.outer(self.u_pool[self.u_index[k]],
                             self.v_pool[self.v_index[k]])
            Fk[k] = outer + outer.T
        return DenseLmi(self.F0, Fk)


class _SlackLmi:
    """Phase-I map over (y, sl): blockdiag(F(y) + sl*I, [sl + 1]).

    The trailing 1x1 block keeps the phase-I objective (minimize sl)
    bounded below; any iterate with sl < 0 and F(y) > 0 certifies strict
    feasibility of the original LMI.
    """

    def __init__(self, base):
        self.base = base
        self.size = base.size + 1
        self.dim = base.dim + 1
        self._eye = np.eye(base.size)

    def combo(self, coeffs):
        s = self.base.size
        out = np.zeros((s + 1, s + 1))
        out[:s, :s] = self.base.combo(coeffs[:-1]) + coeffs[-1] * self._eye
        out[s, s] = coeffs[-1]
        return out

    def eval(self, z):
        s = self.base.size
        out = np.zeros((s + 1, s + 1))
        out[:s, :s] = self.base.eval(z[:-1]) + z[-1] * self._eye
        out[s, s] = z[-1] + 1.0
        return out

    def barrier_gradient(self, Finv):
        s = self.base.size
        top = Finv[:s, :s]
        return np.concatenate([
            self.base.barrier_gradient(top),
            [-np.trace(top) - Finv[s, s]],
        ])

    def barrier_hessian(self, Finv):
        s = self.base.size
        p = self.base.dim
        top = Finv[:s, :s]
        H = np.empty((p + 1, p + 1))
        H[:p, :p] = self.base.barrier_hessian(top)
        cross = self.base.trace_finv2(top)
        H[:p, p] = cross
        H[p, :p] = cross
        H[p, p] = float(np.sum(top * top)) + Finv[s, s] ** 2
        return H


@dataclass
class LmiQpProblem:
    """Quadratic objective, one LMI block, optional equality constraints."""

    Q: np.ndarray                 # (p, p) PSD
    q: np.ndarray                 # (p,)
    lmi: object                   # DenseLmi or RankTwoLmi
    c: float = 0.0
    Aeq: np.ndarray = None        # (m, p) or None
    beq: np.ndarray = None        # (m,)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.q = np.asarray(self.q, dtype=float).ravel()
        p = self.q.size
        if self.Q.shape != (p, p):
            raise ValueError("Q must be (p, p)")
        if self.lmi.dim != p:
            raise ValueError("LMI map dimension != decision dimension")
        scale = max(float(np.trace(self.Q)), 1.0)
        if np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))[0] < -1e-9 * scale:
            raise ValueError("Q must be positive semidefinite")
        if (self.Aeq is None) != (self.beq is None):
            raise ValueError("Aeq and beq must be given together")
        if self.Aeq is not None:
            self.Aeq = np.atleast_2d(np.asarray(self.Aeq, dtype=float))
            self.beq = np.asarray(self.beq, dtype=float).ravel()
            if self.Aeq.shape != (self.beq.size, p):
                raise ValueError("equality constraint shapes inconsistent")

    @property
    def dim(self):
        return self.q.size

    def objective(self, x):
        return 0.5 * float(x @ self.Q @ x) + float(self.q @ x) + self.c


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    residuals: dict
    iterations: int
    status: SolveStatus
    barrier_t: float
    outer_objectives: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status is SolveStatus.OPTIMAL


class _NewtonBreakdown(RuntimeError):
    pass


def _chol_or_none(F):
    try:
        return np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        return None


def _strictly_feasible(lmi, x):
    return _chol_or_none(lmi.eval(x)) is not None


def _inv_from_chol(L):
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True,
                            check_finite=False)
    return Linv.T @ Linv


def _center(Q, q, lmi, y, t, max_inner, dec_tol, g_tol=0.0, stop=None):
    """Damped Newton on t * (0.5 y'Qy + q'y) - logdet F(y).

    ``Q`` may be None for a purely linear cost.  ``stop`` is an optional
    early-exit predicate on the iterate.  Returns (y, iterations); y stays
    strictly feasible throughout.
    """
    p = y.size

    def cost_grad(yy):
        return (q if Q is None else Q @ yy + q)

    for it in range(max_inner):
        if stop is not None and stop(y):
            return y, it
        F = lmi.eval(y)
        L = _chol_or_none(F)
        if L is None:
            raise _NewtonBreakdown("iterate left the feasible cone")
        Finv = _inv_from_chol(L)
        grad = t * cost_grad(y) + lmi.barrier_gradient(Finv)
        if g_tol > 0.0 and np.linalg.norm(grad) <= g_tol:
            return y, it
        hess = lmi.barrier_hessian(Finv)
        if Q is not None:
            hess += t * Q
        ridge = 0.0
        scale = 1.0 + float(np.trace(hess)) / p
        while True:
            try:
                Hf = hess if ridge == 0.0 else hess + ridge * np.eye(p)
                factor = cho_factor(Hf, lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                ridge = max(10.0 * ridge, 1e-12 * scale)
                if ridge > 1e-2 * scale:
                    raise _NewtonBreakdown("Hessian factorization failed")
        step = -cho_solve(factor, grad, check_finite=False)
        dec2 = float(-grad @ step)
        if dec2 < 0.0:
            raise _NewtonBreakdown("negative Newton decrement")
        if g_tol <= 0.0 and dec2 <= dec_tol:
            return y, it

        # exact-difference line search: quadratic part analytic, barrier
        # part from the generalized eigenvalues of the step direction
        g_dot = float(cost_grad(y) @ step)
        quad = 0.0 if Q is None else float(step @ Q @ step)
        dF = lmi.combo(step)
        half = solve_triangular(L, dF, lower=True, check_finite=False)
        S = solve_triangular(L, half.T, lower=True, check_finite=False)
        w = np.linalg.eigvalsh(0.5 * (S + S.T))
        w_min = float(w[0])
        alpha = 1.0
        if w_min < 0.0:
            alpha = min(1.0, -0.99 / w_min)

        accepted = False
        for _ in range(60):
            if 1.0 + alpha * w_min > 0.0:
                delta = t * (alpha * g_dot + 0.5 * alpha**2 * quad) \
                    - float(np.sum(np.log1p(alpha * w)))
                if delta <= -1e-4 * alpha * dec2:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            return y, it
        new_y = y + alpha * step
        if np.array_equal(new_y, y):
            return y, it   # below floating-point resolution
        y = new_y
    return y, max_inner


def _phase_one(lmi, y0, tol, max_outer, max_inner):
    """Strictly feasible point via min slack sl, F(y) + sl I >= 0.

    Returns the point, or None when the infimum of sl is positive (the LMI
    is infeasible).
    """
    p = lmi.dim
    aug = _SlackLmi(lmi)
    sl0 = max(0.0, -float(np.linalg.eigvalsh(lmi.eval(y0))[0])) + 1.0
    z = np.concatenate([y0, [sl0]])
    q_aug = np.zeros(p + 1)
    q_aug[p] = 1.0

    def feasibility_proved(zz):
        return zz[p] < 0.0 and _strictly_feasible(lmi, zz[:p])

    t = 1.0
    for _ in range(max_outer):
        z, _ = _center(None, q_aug, aug, z, t, max_inner,
                       dec_tol=1e-9 * t, stop=feasibility_proved)
        if feasibility_proved(z):
            return z[:p]
        if aug.size / t < min(tol, 1e-9) and z[p] > 0.0:
            return None
        t *= 10.0
    return None


def solve(prob, tol=1e-7, max_outer=50, max_inner=50, x0=None):
    """Solve an :class:`LmiQpProblem`; see the module docstring.

    ``x0`` is an optional warm start; it is used when it satisfies the
    equality constraints and is strictly feasible, and ignored otherwise.
    """
    lmi = prob.lmi

    # equality elimination: x = xp + N y
    if prob.Aeq is not None and prob.Aeq.shape[0] > 0:
        if isinstance(lmi, RankTwoLmi):
            lmi = lmi.densified()
        xp, *_ = np.linalg.lstsq(prob.Aeq, prob.beq, rcond=None)
        if np.linalg.norm(prob.Aeq @ xp - prob.beq) > \
                tol * (1.0 + np.linalg.norm(prob.beq)):
            return SolveReport(xp, prob.objective(xp), {}, 0,
                               SolveStatus.INFEASIBLE, 0.0)
        _, sv, Vt = np.linalg.svd(prob.Aeq)
        rank = int(np.sum(sv > sv[0] * max(prob.Aeq.shape) * 1e-14)) \
            if sv.size else 0
        N = Vt[rank:].T
        if N.shape[1] == 0:
            # fully determined point: just certify it
            return _finalize(prob, xp, tol, 0, max(1.0, lmi.size / tol))
        Qr = N.T @ prob.Q @ N
        qr = N.T @ (prob.Q @ xp + prob.q)
        red_lmi = DenseLmi(lmi.eval(xp),
                           np.tensordot(N.T, lmi.Fk, axes=(1, 0)))

        def lift(y):
            return xp + N @ y

        y0 = None
        if x0 is not None:
            x0 = np.asarray(x0, dtype=float)
            if np.linalg.norm(prob.Aeq @ x0 - prob.beq) <= \
                    tol * (1.0 + np.linalg.norm(prob.beq)):
                y0 = N.T @ (x0 - xp)
    else:
        Qr, qr = prob.Q, prob.q
        red_lmi = lmi

        def lift(y):
            return y

        y0 = None if x0 is None else np.asarray(x0, dtype=float)

    pr = red_lmi.dim
    s = red_lmi.size

    # strictly feasible start
    start = None
    if y0 is not None and _strictly_feasible(red_lmi, y0):
        start = y0
    if start is None and _strictly_feasible(red_lmi, np.zeros(pr)):
        start = np.zeros(pr)
    if start is None:
        seed = y0 if y0 is not None else np.zeros(pr)
        try:
            start = _phase_one(red_lmi, seed, tol, max_outer, max_inner)
        except _NewtonBreakdown:
            x = lift(seed)
            return SolveReport(x, prob.objective(x), {}, 0,
                               SolveStatus.NUMERICAL_FAILURE, 0.0)
        if start is None:
            x = lift(seed)
            return SolveReport(x, prob.objective(x), {}, 0,
                               SolveStatus.INFEASIBLE, 0.0)

    y = start
    f0 = 0.5 * float(y @ Qr @ y) + float(qr @ y)
    t = max(1.0, s / (abs(f0) + 1.0))
    total_inner = 0
    outer_objectives = [prob.objective(lift(y))]
    try:
        for _ in range(max_outer):
            final_stage = s / t < tol
            y, inner = _center(
                Qr, qr, red_lmi, y, t, max_inner,
                dec_tol=1e-9 * t,
                g_tol=(0.05 * tol * t) if final_stage else 0.0,
            )
            total_inner += inner + 1
            outer_objectives.append(prob.objective(lift(y)))
            if final_stage:
                break
            t *= 10.0
    except _NewtonBreakdown:
        x = lift(y)
        report = _finalize(prob, x, tol, total_inner, t)
        report.status = SolveStatus.NUMERICAL_FAILURE
        report.outer_objectives = outer_objectives
        return report

    x = lift(y)
    report = _finalize(prob, x, tol, total_inner, t)
    report.outer_objectives = outer_objectives
    return report


def _corrected_stationarity(prob, x, barrier_t):
    """Stationarity residual under the Newton-corrected dual estimate.

    The raw barrier dual F^-1/t certifies stationarity only at the exact
    analytic center, which floating point cannot always represent when the
    LMI is nearly singular at the optimum.  The one-step-corrected dual
    (F^-1 - F^-1 dF F^-1)/t, with dF the Newton displacement of the
    centering problem, is the standard machine-accurate estimate; it is
    used only when it is itself positive semidefinite.
    """
    lmi = prob.lmi
    F = lmi.eval(x)
    L = _chol_or_none(F)
    if L is None:
        return None
    Finv = _inv_from_chol(L)
    gphi = lmi.barrier_gradient(Finv)
    grad_f = prob.Q @ x + prob.q
    g = barrier_t * grad_f + gphi
    Hphi = lmi.barrier_hessian(Finv)
    H = Hphi + barrier_t * prob.Q
    try:
        factor = cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    step = -cho_solve(factor, g, check_finite=False)
    dF = lmi.combo(step)
    half = solve_triangular(L, dF, lower=True, check_finite=False)
    S = solve_triangular(L, half.T, lower=True, check_finite=False)
    # corrected dual is PSD iff I - S is
    if np.linalg.eigvalsh(0.5 * (S + S.T))[-1] >= 1.0:
        return None
    r = grad_f + (gphi + Hphi @ step) / barrier_t
    return float(np.linalg.norm(r))


def _finalize(prob, x, tol, iterations, barrier_t):
    residuals = check_kkt(prob, x, barrier_t)
    certified = residuals["stationarity"]
    if certified > tol and (prob.Aeq is None or prob.Aeq.shape[0] == 0):
        corrected = _corrected_stationarity(prob, x, barrier_t)
        if corrected is not None:
            certified = min(certified, corrected)
    residuals["stationarity_certified"] = certified
    ok = (
        residuals["min_eig"] >= -tol
        and residuals["equality"] <= tol
        and residuals["gap"] <= tol
        and certified <= tol
    )
    status = SolveStatus.OPTIMAL if ok else SolveStatus.MAX_ITER
    return SolveReport(x, prob.objective(x), residuals, iterations, status,
                       barrier_t)


def check_kkt(prob, x, barrier_t):
    """KKT residuals using the barrier dual multiplier F(x)^{-1} / t.

    Returns a dict with 'stationarity', 'min_eig' (of the LMI; negative
    means primal infeasibility), 'equality', and the duality-gap surrogate
    'gap' = s / t.
    """
    x = np.asarray(x, dtype=float)
    F = prob.lmi.eval(x)
    L = _chol_or_none(F)
    if L is None:
        raise np.linalg.LinAlgError(
            "LMI value is singular at the query point"
        )
    Finv = _inv_from_chol(L)
    # tr(F_k Lambda) with Lambda = Finv / t equals -barrier_gradient / t
    adjoint = -prob.lmi.barrier_gradient(Finv) / barrier_t
    r = prob.Q @ x + prob.q - adjoint
    if prob.Aeq is not None and prob.Aeq.shape[0] > 0:
        nu, *_ = np.linalg.lstsq(prob.Aeq.T, -r, rcond=None)
        r = r + prob.Aeq.T @ nu
        eq = float(np.linalg.norm(prob.Aeq @ x - prob.beq))
    else:
        eq = 0.0
    return {
        "stationarity": float(np.linalg.norm(r)),
        "min_eig": float(np.linalg.eigvalsh(F)[0]),
        "equality": eq,
        "gap": prob.lmi.size / barrier_t,
    }


# ---------------------------------------------------------------------------
# problem dump/load (dense problems only; regression-test convenience)


def problem_save(prob, path):
    lmi = prob.lmi.densified()
    p, s = prob.dim, lmi.size
    m = 0 if prob.Aeq is None else prob.Aeq.shape[0]

    def fmt(arr):
        return " ".join(float(v).hex() for v in np.ravel(arr))

    lines = [
        "gpsteer-lmiqp-v1",
        f"p {p}",
        f"s {s}",
        f"m {m}",
        f"Q {fmt(prob.Q)}",
        f"q {fmt(prob.q)}",
        f"c {fmt(prob.c)}",
        f"F0 {fmt(lmi.F0)}",
        f"Fk {fmt(lmi.Fk)}",
    ]
    if m:
        lines.append(f"Aeq {fmt(prob.Aeq)}")
        lines.append(f"beq {fmt(prob.beq)}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def problem_load(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "gpsteer-lmiqp-v1":
        raise ValueError("missing 'gpsteer-lmiqp-v1' header")
    fields = {}
    for ln in lines[1:]:
        name, *vals = ln.split()
        fields[name] = vals
    p = int(fields["p"][0])
    s = int(fields["s"][0])
    m = int(fields["m"][0])

    def arr(name, shape):
        return np.array([float.fromhex(v) for v in fields[name]]).reshape(
            shape
        )

    lmi = DenseLmi(arr("F0", (s, s)), arr("Fk", (p, s, s)))
    Aeq = arr("Aeq", (m, p)) if m else None
    beq = arr("beq", (m,)) if m else None
    return LmiQpProblem(
        arr("Q", (p, p)), arr("q", (p,)), lmi,
        float(arr("c", (1,))[0]), Aeq, beq,
    )
