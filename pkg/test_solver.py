import numpy as np
import pytest
from pydantic import ValidationError

from esdmix.closedform import mp_density, two_delta_density, two_delta_roots
from esdmix.linalg import resolvent_traces
from esdmix.models import TestProblem as ProblemSpec, build_test_problem
from esdmix.solver import (
    AndersonHistory,
    SolverConfig,
    anderson_update,
    solve_batch,
    solve_point,
    stieltjes_companion,
)


def test_config_defaults():
    config = SolverConfig()
    assert (config.epsilon, config.xi0, config.beta, config.q_cap) == (1e-5, 1.0, 10.0, 2)
    assert config.damping_scale == 0.1
    assert (config.points_per_eigenvalue, config.min_points_per_segment, config.min_dimension) == (3, 15, 100)
    assert config.max_iters_per_level is None
    assert config.levels == 1 and config.regrid_ratios == [1.0]
    assert config.iteration_cap == 10 ** 6


def test_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(beta=1.0)
    with pytest.raises(ValidationError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ValidationError):
        SolverConfig(xi0=1e-6)
    with pytest.raises(ValidationError):
        SolverConfig(q_cap=-1)
    with pytest.raises(ValidationError):
        SolverConfig(points_per_eigenvalue=20)
    with pytest.raises(ValidationError):
        SolverConfig(levels=3, regrid_ratios=[1.0, 2.0])
    with pytest.raises(ValidationError):
        SolverConfig(epsilo=1e-3)


def test_config_ratio_per_level():
    assert SolverConfig(levels=3).ratio_for(2) == 1.0
    config = SolverConfig(levels=2, regrid_ratios=[1.0, 0.5])
    assert config.ratio_for(1) == 1.0 and config.ratio_for(2) == 0.5
    assert SolverConfig(max_iters=50).iteration_cap == 50


def test_history_keeps_cap_plus_one_entries():
    history = AndersonHistory(q_cap=2)
    for i in range(5):
        history.push(np.array([i + 0j]), np.array([i + 0j]))
    assert len(history.residuals) == 3 and len(history) == 2
    assert history.residuals[0][0] == 2
    history.reset()
    assert len(history) == 0


def test_anderson_hand_example():
    history = AndersonHistory(q_cap=2)
    first = anderson_update(history, np.array([0.2 + 0j]), np.array([0j]))
    assert first[0] == pytest.approx(0.2)

    # h: 0.2 -> 0.1, damping 0.01, nu = -0.5
    second = anderson_update(history, np.array([0.1 + 0j]), np.array([0j]))
    assert second[0] == pytest.approx(0.05)


def test_anderson_without_history_is_plain_fixed_point():
    history = AndersonHistory(q_cap=0)
    anderson_update(history, np.array([0.2 + 0j]), np.array([0j]))
    result = anderson_update(history, np.array([0.1 + 0j]), np.array([0j]))
    assert result[0] == 0.1


def test_anderson_identical_residuals():
    history = AndersonHistory(q_cap=2)
    anderson_update(history, np.array([1.3 + 0j]), np.array([1.0 + 0j]))
    result = anderson_update(history, np.array([1.3 + 0j]), np.array([1.0 + 0j]))
    assert result[0] == 1.3


def test_stieltjes_companion():
    assert stieltjes_companion(0.5 + 0.25j, 2.0 + 1j, 1.0) == 0.5 + 0.25j
    assert stieltjes_companion(0j, 1j, 0.5) == pytest.approx(0.5j)
    m, z, gamma = 0.3 + 0.7j, 1.5 + 0.2j, 0.4
    companion = stieltjes_companion(m, z, gamma)
    assert (companion - (gamma - 1) / z) / gamma == pytest.approx(m)
    with pytest.raises(ValueError):
        stieltjes_companion(m, 0j, gamma)


def test_mp_point(mp_half, config):
    solution = solve_point(1.0, mp_half, config)
    assert solution.converged
    assert solution.f == pytest.approx(mp_density(1.0, 0.5), abs=1e-4)
    assert solution.f == pytest.approx(0.421005, abs=2e-4)


def test_mp_point_off_support(mp_half, config):
    solution = solve_point(100.0, mp_half, config)
    assert solution.converged
    assert solution.f <= config.epsilon


def test_homotopy_path(mp_half, config):
    solution = solve_point(1.5, mp_half, config)
    path = np.array(solution.xi_path)
    assert solution.backoffs == 0
    assert path[0] == config.xi0
    assert np.all(np.diff(path) <= 0)
    assert path[-1] == config.epsilon
    assert solution.residual < config.epsilon


def test_converged_point_is_a_fixed_point(two_delta_half, config):
    x = 1.2
    solution = solve_point(x, two_delta_half, config)
    traces = resolvent_traces(solution.e, complex(x, config.epsilon ** 2), two_delta_half)
    assert solution.converged
    assert np.max(np.abs(traces.e_out - solution.e)) < 2 * config.epsilon


def test_two_delta_recovers_spurious_zero_abscissa(two_delta_half, config):
    expected = two_delta_density(2.2, 0.5, [1.0, 8.0], [0.5, 0.5])
    solution = solve_point(2.2, two_delta_half, config)
    assert solution.converged
    assert solution.f > 0.01
    assert solution.f == pytest.approx(expected, abs=1e-4)


def test_without_continuation_real_solution_is_kept(two_delta_half, config):
    roots = two_delta_roots(2.2, 0.5, [1.0, 8.0], [0.5, 0.5])
    real_root = roots[np.argmin(np.abs(roots.imag))].real
    start = np.array([(real_root - 1) / 0.5 + 0j])

    solution = solve_point(2.2, two_delta_half, config, warm_start=start, continuation=False)

    assert solution.xi_path == (config.epsilon,)
    assert solution.converged
    assert solution.f < 1e-6


def test_warm_start_does_not_change_answer(mp_half, config):
    neighbour = solve_point(1.02, mp_half, config)
    cold = solve_point(1.0, mp_half, config)
    warm = solve_point(1.0, mp_half, config, warm_start=neighbour.e)
    assert warm.converged and cold.converged
    assert warm.f == pytest.approx(cold.f, abs=1e-4)


def test_iteration_cap_reports_nonconvergence(mp_half):
    solution = solve_point(1.0, mp_half, SolverConfig(max_iters=2))
    assert not solution.converged
    assert solution.iterations == 2
    assert np.isfinite(solution.f) and solution.f >= 0


def test_positive_inside_support(mp_half, config):
    for x in np.linspace(0.2, 2.8, 9):
        assert solve_point(x, mp_half, config).f > 0


def test_batch_matches_point_by_point(mp_half, config):
    xs = [0.3, 1.0, 2.5, 100.0]
    warm = [None, np.array([0.5 + 0.5j]), None, None]
    batch = solve_batch(xs, mp_half, config, warm_starts=warm)

    assert [s.x for s in batch] == xs
    for x, start, solution in zip(xs, warm, batch):
        single = solve_point(x, mp_half, config, warm_start=start)
        assert solution.iterations == single.iterations
        assert solution.xi_path == single.xi_path
        assert solution.f == pytest.approx(single.f, rel=1e-12, abs=1e-15)
        assert solution.converged == single.converged


def test_empty_batch(mp_half, config):
    assert solve_batch([], mp_half, config) == []


def test_level_budget_forces_descent_and_stops(mp_half):
    solution = solve_point(1.0, mp_half, SolverConfig(q_cap=0, max_iters_per_level=5))
    assert solution.xi_path[-1] == 1e-5
    assert np.all(np.diff(solution.xi_path) < 0)
    assert solution.iterations <= 5 * len(solution.xi_path)


def test_replicated_two_delta_gives_same_density(config):
    xs = [0.4, 1.2, 2.2, 6.0, 15.0]
    small = build_test_problem(ProblemSpec(kind="two_delta", gamma=0.5, lambdas=[1.0, 8.0],
                                           weights=[0.5, 0.5], min_dimension=2))
    large = build_test_problem(ProblemSpec(kind="two_delta", gamma=0.5, lambdas=[1.0, 8.0],
                                           weights=[0.5, 0.5], min_dimension=4))
    assert (small.dimension, large.dimension) == (2, 4)
    for a, b in zip(solve_batch(xs, small, config), solve_batch(xs, large, config)):
        assert a.f == pytest.approx(b.f, abs=1e-10)


@pytest.mark.slow
def test_anderson_mixing_needs_fewer_iterations(mp_half):
    xs = [0.5, 1.0, 2.0]
    mixed = SolverConfig(q_cap=2, max_iters=20000)
    plain = SolverConfig(q_cap=0, max_iters=20000)
    mixed_iterations = sum(solve_point(x, mp_half, mixed).iterations for x in xs)
    plain_iterations = sum(solve_point(x, mp_half, plain).iterations for x in xs)
    assert mixed_iterations < plain_iterations
