import numpy as np
import pytest

from gpsteer.dynamics import AffineDynamics, AnalyticUnicycle, UnicycleParams
from gpsteer.greedy import (
    GreedyStepError,
    SteeringScenario,
    UtParams,
    greedy_steer,
    monte_carlo,
)
from gpsteer.lcs import SteeringTarget, lcs_solve
from gpsteer.dynamics import linearize
from gpsteer.ut import GaussianState, ut_propagate


def affine_scenario(T=6, w=0.004):
    rng = np.random.default_rng(2)
    A = np.array([[0.95, 0.2], [0.0, 0.9]])
    B = np.array([[0.0], [0.25]])
    d = np.array([0.01, -0.02])
    model = AffineDynamics(A, B, d, W=w * np.eye(2))
    initial = GaussianState([2.0, -1.0], np.array([[0.3, 0.05],
                                                   [0.05, 0.2]]))
    target = SteeringTarget([0.5, 0.2], 0.05 * np.eye(2))
    return model, SteeringScenario(initial, target, T)


def test_affine_greedy_reaches_target_moments():
    model, scenario = affine_scenario()
    trace = greedy_steer(model, scenario)
    terminal = trace.terminal
    assert np.linalg.norm(terminal.mean - scenario.target.mean_goal) <= 1e-5
    tol = 1e-6 * np.trace(scenario.target.cov_goal) / 2
    gap = np.linalg.eigvalsh(terminal.cov - scenario.target.cov_goal)[-1]
    assert gap <= 10 * tol


def test_single_step_horizon_equals_one_lcs_solve():
    model, scenario = affine_scenario(T=1)
    # an affine model with one input cannot hit a 2-d mean in one step;
    # use full input authority instead
    model = AffineDynamics(model.A, np.eye(2), model.d, model.W)
    trace = greedy_steer(model, scenario)
    lin = linearize(model, scenario.initial.mean, np.zeros(2))
    sol = lcs_solve(lin, scenario.initial, scenario.target, 1)
    assert np.allclose(trace.laws[0].feedforward, sol.first_law.feedforward)
    assert np.allclose(trace.laws[0].gain, sol.first_law.gain)
    expected = ut_propagate(scenario.initial, model, sol.first_law)
    assert np.allclose(trace.terminal.mean, expected.mean, atol=1e-12)
    assert np.allclose(trace.terminal.cov, expected.cov, atol=1e-12)


def test_trace_consistency_under_replay():
    model, scenario = affine_scenario()
    trace = greedy_steer(model, scenario)
    state = scenario.initial
    for t, law in enumerate(trace.laws):
        state = ut_propagate(state, model, law)
        assert np.array_equal(state.mean, trace.states[t + 1].mean)
        assert np.array_equal(state.cov, trace.states[t + 1].cov)


def test_infeasible_step_reports_index():
    # zero process noise but an impossibly tight target in one step from a
    # huge initial covariance, with too little input authority
    model = AffineDynamics(np.eye(2), np.array([[0.0], [1.0]]),
                           W=np.zeros((2, 2)))
    initial = GaussianState([0.0, 0.0], 10.0 * np.eye(2))
    target = SteeringTarget([0.0, 0.0], 1e-6 * np.eye(2))
    scenario = SteeringScenario(initial, target, 1)
    with pytest.raises(GreedyStepError, match="step 0"):
        greedy_steer(model, scenario)


def test_monte_carlo_deterministic_and_degenerate_case():
    model, scenario = affine_scenario()
    trace = greedy_steer(model, scenario)
    r1 = monte_carlo(model, trace, 64, seed=5)
    r2 = monte_carlo(model, trace, 64, seed=5)
    assert np.array_equal(r1.states, r2.states)

    # zero noise + zero initial covariance: all rollouts coincide
    quiet = AffineDynamics(model.A, model.B, model.d, W=np.zeros((2, 2)))
    frozen = SteeringScenario(
        GaussianState(scenario.initial.mean, 1e-18 * np.eye(2)),
        scenario.target, scenario.horizon,
    )
    tr = greedy_steer(quiet, frozen)
    rep = monte_carlo(quiet, tr, 16, seed=1)
    for r in range(16):
        assert np.allclose(rep.states[r], rep.states[0], atol=1e-7)


def test_monte_carlo_covariance_matches_analytic_propagation():
    model, scenario = affine_scenario(T=4, w=0.003)
    trace = greedy_steer(model, scenario)
    rep = monte_carlo(model, trace, 10**4, seed=9)
    # exact closed-loop covariance propagation through the affine system
    cov = scenario.initial.cov
    mean = scenario.initial.mean
    for law in trace.laws:
        M = model.A + model.B @ law.gain
        mean = model.A @ mean + model.B @ law(mean) + model.d
        cov = M @ cov @ M.T + model.W
    n = rep.states.shape[0]
    se_scale = np.sqrt(
        (np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n
    )
    assert np.all(np.abs(rep.terminal_cov - cov) <= 3 * se_scale + 1e-12)
    assert np.allclose(rep.terminal_mean, mean,
                       atol=4 * np.sqrt(np.max(np.diag(cov)) / n) + 1e-12)


def test_unicycle_exact_model_short_horizon():
    # inexpensive smoke test of the full stack on the real simulator;
    # the full-length experiment lives in the acceptance suite
    params = UnicycleParams()
    model = AnalyticUnicycle(params)
    initial = GaussianState(
        [0.0, 0.0, 0.0, 1.0], np.diag([0.1, 0.2, 0.1, 0.1]) ** 2
    )
    target = SteeringTarget(
        [0.25, 0.0, 0.0, 1.0], np.diag([0.1, 0.08, 0.08, 0.08]) ** 2
    )
    scenario = SteeringScenario(initial, target, 6)
    trace = greedy_steer(model, scenario)
    assert len(trace.states) == 7
    assert np.linalg.norm(trace.terminal.mean - target.mean_goal) <= 0.05
    gap = np.linalg.eigvalsh(trace.terminal.cov - target.cov_goal)[-1]
    assert gap <= 1e-3
