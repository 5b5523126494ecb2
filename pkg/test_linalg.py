import numpy as np
import pytest

from esdmix.exceptions import InvalidProblemError, NearRealAxisBreakdown
from esdmix.linalg import hermitian_eigenvalues, resolvent_traces, resolvent_traces_batch
from esdmix.models import PopulationMixture, TestProblem as ProblemSpec, build_test_problem


def _random_unitary(dimension, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dimension, dimension)) + 1j * rng.standard_normal((dimension, dimension)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_hermitian_eigenvalues():
    np.testing.assert_allclose(hermitian_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1.0, 2.0, 3.0])
    with pytest.raises(InvalidProblemError, match="square"):
        hermitian_eigenvalues(np.ones((2, 3)))
    with pytest.raises(InvalidProblemError, match="Hermitian"):
        hermitian_eigenvalues(np.array([[1.0, 1j], [1j, 1.0]]))


def test_identity_population_matches_scalar_equation():
    mixture = PopulationMixture(np.eye(5), [1.0], 0.5)
    e = np.array([0.3 + 0.7j])
    z = 1.2 + 0.1j

    traces = resolvent_traces(e, z, mixture)

    expected = 1.0 / (1.0 / (1.0 + 0.5 * e[0]) - z)
    assert traces.e_out[0] == pytest.approx(expected, rel=1e-12)
    assert traces.m_out == pytest.approx(expected, rel=1e-12)


def test_diagonal_fast_path_matches_dense():
    mixture = build_test_problem(ProblemSpec(kind="diag", gamma=0.5, populations=3, dimension=9,
                                                         min_dimension=9))
    e = np.array([0.1 + 0.5j, 0.2 + 0.3j, -0.1 + 0.8j])
    z = 1.5 + 0.01j

    fast = resolvent_traces(e, z, mixture)
    dense = resolvent_traces(e, z, mixture, force_dense=True)

    np.testing.assert_allclose(fast.e_out, dense.e_out, rtol=1e-12)
    assert fast.m_out == pytest.approx(dense.m_out, rel=1e-12)


def test_traces_are_unitarily_invariant_for_one_population():
    diagonal = np.diag(np.linspace(1.0, 4.0, 6))
    u = _random_unitary(6, seed=3)
    rotated = u @ diagonal @ u.conj().T
    rotated = (rotated + rotated.conj().T) / 2
    e = np.array([0.4 + 0.6j])
    z = 2.0 + 0.05j

    plain = resolvent_traces(e, z, PopulationMixture(diagonal, [1.0], 0.5))
    dense = resolvent_traces(e, z, PopulationMixture(rotated, [1.0], 0.5))

    np.testing.assert_allclose(dense.e_out, plain.e_out, rtol=1e-10)
    assert dense.m_out == pytest.approx(plain.m_out, rel=1e-10)


def test_pole_in_scaling_raises_breakdown():
    mixture = PopulationMixture(np.eye(3), [1.0], 0.5)
    with pytest.raises(NearRealAxisBreakdown):
        resolvent_traces(np.array([-2.0 + 0j]), 1.0 + 1e-10j, mixture)


def test_singular_resolvent_raises_breakdown():
    # e = 0 and z = 1 make B = I - I singular
    mixture = PopulationMixture(np.eye(3), [1.0], 0.5)
    with pytest.raises(NearRealAxisBreakdown):
        resolvent_traces(np.array([0j]), 1.0 + 0j, mixture)
    # eigenvalues 0.5 and 1.5
    dense = PopulationMixture(np.array([[1.0, 0.5], [0.5, 1.0]]), [1.0], 0.5)
    with pytest.raises(NearRealAxisBreakdown):
        resolvent_traces(np.array([0j]), 1.5 + 0j, dense)


def test_two_population_hand_example():
    # B = 0.5 + 1.5 - i, so B^-1 = (2 + i) / 5
    mixture = PopulationMixture([np.array([[1.0]]), np.array([[3.0]])], [0.5, 0.5], 0.5)
    expected = (2 + 1j) / 5

    for force_dense in (False, True):
        traces = resolvent_traces(np.zeros(2, dtype=complex), 1j, mixture, force_dense=force_dense)
        np.testing.assert_allclose(traces.e_out, [0.4 + 0.2j, 1.2 + 0.6j], rtol=1e-12)
        assert traces.m_out == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("force_dense", [False, True])
def test_small_perturbations_give_small_changes(force_dense):
    mixture = build_test_problem(ProblemSpec(kind="corr", gamma=0.5, populations=2, dimension=6, min_dimension=6))
    rng = np.random.default_rng(11)
    e = np.array([0.2 + 0.6j, 0.5 + 0.4j])
    z = 1.3 + 0.2j
    base = resolvent_traces(e, z, mixture, force_dense=force_dense)

    for delta in (1e-4, 1e-6, 1e-8):
        step = delta * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        moved = resolvent_traces(e + step, z, mixture, force_dense=force_dense)
        assert np.max(np.abs(moved.e_out - base.e_out)) < 1e3 * np.max(np.abs(step))
        assert abs(moved.m_out - base.m_out) < 1e3 * np.max(np.abs(step))


@pytest.mark.parametrize("kind", ["diag", "corr"])
def test_batched_traces_match_single_calls(kind):
    mixture = build_test_problem(ProblemSpec(kind=kind, gamma=0.5, populations=2, dimension=4, min_dimension=4))
    e = np.array([[0.1 + 0.5j, 0.2 + 0.3j], [0.4 + 0.1j, 0.3 + 0.9j], [-2.0 + 0j, 0.1 + 0.1j]])
    z = np.array([1.5 + 0.01j, 0.8 + 0.2j, 1.0 + 0.1j])

    e_out, m_out, ok = resolvent_traces_batch(e, z, mixture)

    # 1 + gamma e = 0 in the last row
    np.testing.assert_array_equal(ok, [True, True, False])
    for p in range(2):
        single = resolvent_traces(e[p], z[p], mixture)
        np.testing.assert_allclose(e_out[p], single.e_out, rtol=1e-12)
        assert m_out[p] == pytest.approx(single.m_out, rel=1e-12)
