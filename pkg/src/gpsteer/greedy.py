"""Shrinking-horizon greedy covariance steering and its evaluation.

Each step linearizes the transition model at the current predicted mean
and input mean, solves the remaining-horizon linearized steering problem,
applies only the first law, and pushes the moment estimates one step
forward with the unscented transform.  A completed trace can then be
replayed against the true noisy simulator over many Monte Carlo rollouts.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import linearize
from .lcs import SteeringInfeasibleError, SteeringTarget, lcs_solve
from .ut import GaussianState, ut_propagate


@dataclass
class UtParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = None   # None -> 3 - n


@dataclass
class SteeringScenario:
    """Boundary conditions and knobs for one steering run."""

    initial: GaussianState
    target: SteeringTarget
    horizon: int
    ut: UtParams = field(default_factory=UtParams)
    solver_tol: float = 1e-7
    feedback_depth: int = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if np.linalg.eigvalsh(self.initial.cov)[0] <= 0.0:
            raise ValueError("initial covariance must be positive definite")


@dataclass
class StepRecord:
    """What the greedy loop knew and did at one time step."""

    law: object                 # AffineLaw actually applied
    input_mean: np.ndarray      # linearization input
    status: str
    iterations: int
    objective: float


@dataclass
class SteeringTrace:
    """Predicted moments (horizon+1 states) and the laws that produced
    them, plus per-step solver summaries."""

    scenario: SteeringScenario
    states: list                # GaussianState, length T+1
    steps: list                 # StepRecord, length T

    @property
    def laws(self):
        return [s.law for s in self.steps]

    @property
    def terminal(self):
        return self.states[-1]


class GreedyStepError(RuntimeError):
    """A steering subproblem failed mid-run; carries the step index."""

    def __init__(self, step, cause):
        super().__init__(f"steering failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


def greedy_steer(model, scenario):
    """Run the three-step greedy loop over the whole horizon.

    Aborts with :class:`GreedyStepError` if any subproblem is infeasible;
    a silently degraded policy would poison every later evaluation.
    """
    T = scenario.horizon
    ut = scenario.ut
    state = scenario.initial
    nu_hat = np.zeros(getattr(model, "n_input"))
    states = [state]
    steps = []
    for t in range(T):
        lin = linearize(model, state.mean, nu_hat)
        try:
            sol = lcs_solve(
                lin, state, scenario.target, T - t,
                solver_tol=scenario.solver_tol,
                feedback_depth=scenario.feedback_depth,
            )
        except SteeringInfeasibleError as exc:
            raise GreedyStepError(t, exc) from exc
        law = sol.first_law
        state = ut_propagate(state, model, law,
                             alpha=ut.alpha, beta=ut.beta, kappa=ut.kappa)
        steps.append(StepRecord(
            law=law,
            input_mean=nu_hat.copy(),
            status=sol.report.status.value,
            iterations=sol.report.iterations,
            objective=sol.report.objective,
        ))
        states.append(state)
        nu_hat = law(state.mean)
    return SteeringTrace(scenario, states, steps)


@dataclass
class RolloutReport:
    """Closed-loop sample trajectories under a stored policy."""

    states: np.ndarray          # (n_rollouts, T+1, nz)
    inputs: np.ndarray          # (n_rollouts, T, nu)
    terminal_mean: np.ndarray
    terminal_cov: np.ndarray


def run_rollouts(true_model, laws, initial, n_rollouts, seed):
    """Sample closed-loop trajectories of time-varying affine laws.

    Initial states are drawn from ``initial``; each rollout uses its own
    generator derived from (seed, rollout index), so results do not depend
    on evaluation order.
    """
    T = len(laws)
    nz = true_model.n_state
    nu = true_model.n_input
    states = np.empty((n_rollouts, T + 1, nz))
    inputs = np.empty((n_rollouts, T, nu))
    L0 = np.linalg.cholesky(
        initial.cov + 1e-15 * np.trace(initial.cov) * np.eye(nz)
    ) if np.any(initial.cov) else np.zeros((nz, nz))
    for r in range(n_rollouts):
        rng = np.random.default_rng([seed, r])
        z = initial.mean + L0 @ rng.standard_normal(nz)
        states[r, 0] = z
        for t, law in enumerate(laws):
            u = law(z)
            inputs[r, t] = u
            z = true_model.sample(z, u, rng)
            states[r, t + 1] = z
    terminal = states[:, -1, :]
    mean = terminal.mean(axis=0)
    centered = terminal - mean[None, :]
    cov = centered.T @ centered / max(n_rollouts - 1, 1)
    return RolloutReport(states, inputs, mean, 0.5 * (cov + cov.T))


def monte_carlo(true_model, trace, n_rollouts, seed):
    """Replay a steering trace's laws against the true noisy simulator."""
    return run_rollouts(true_model, trace.laws, trace.scenario.initial,
                        n_rollouts, seed)
