import numpy as np
import pytest
from scipy.integrate import quad

from esdmix.closedform import MpLaw, mp_density, two_delta_density, two_delta_roots, two_delta_support


def test_mp_support_and_atom():
    law = MpLaw(0.5)
    assert law.support_lo == pytest.approx((1 - np.sqrt(0.5)) ** 2)
    assert law.support_hi == pytest.approx((1 + np.sqrt(0.5)) ** 2)
    assert law.atom_at_zero == 0.0
    assert MpLaw(2.0).atom_at_zero == pytest.approx(0.5)
    assert MpLaw(2.0).continuous_mass == pytest.approx(0.5)
    with pytest.raises(ValueError):
        MpLaw(0.0)


def test_mp_density_values():
    # (hi - 1)(1 - lo) = 4 gamma - gamma^2
    assert mp_density(1.0, 0.5) == pytest.approx(np.sqrt(1.75) / np.pi, rel=1e-12)
    assert mp_density(1.0, 0.5) == pytest.approx(0.421005, abs=1e-4)
    assert mp_density(0.05, 0.5) == 0.0
    assert mp_density(3.0, 0.5) == 0.0
    values = mp_density(np.array([0.0, 1.0, 10.0]), 0.5)
    assert values.shape == (3,)
    assert values[0] == 0.0 and values[2] == 0.0


@pytest.mark.parametrize("gamma, mass", [(0.5, 1.0), (0.25, 1.0), (2.0, 0.5)])
def test_mp_density_mass(gamma, mass):
    law = MpLaw(gamma)
    total, _ = quad(lambda x: mp_density(x, gamma), law.support_lo, law.support_hi, limit=200)
    assert total == pytest.approx(mass, abs=1e-6)


def test_mp_cdf():
    law = MpLaw(0.5)
    assert law.cdf(0.0) == 0.0
    assert law.cdf(law.support_hi) == pytest.approx(1.0)
    assert law.cdf(100.0) == 1.0
    partial, _ = quad(lambda x: mp_density(x, 0.5), law.support_lo, 1.0)
    assert law.cdf(1.0) == pytest.approx(partial, abs=1e-5)
    grid = np.linspace(0.0, 3.0, 101)
    assert np.all(np.diff(law.cdf(grid)) >= 0)


def test_two_delta_equal_eigenvalues_reduce_to_scaled_mp():
    x = np.linspace(0.1, 7.0, 25)
    np.testing.assert_allclose(two_delta_density(x, 0.5, [2.0, 2.0], [0.3, 0.7]), mp_density(x / 2.0, 0.5) / 2.0)


def test_mp_reciprocal_ratio_is_a_rescaling():
    # Swapping M and N at fixed normalisation: f_{1/g}(x) = g^2 f_g(g x)
    law = MpLaw(2.0)
    x = np.linspace(law.support_lo, law.support_hi, 41)[1:-1]
    np.testing.assert_allclose(mp_density(x, 2.0), 0.25 * mp_density(0.5 * x, 0.5), rtol=1e-12)
    assert MpLaw(2.0).continuous_mass == pytest.approx(0.5 * MpLaw(0.5).continuous_mass)


def test_two_delta_with_one_eigenvalue_is_mp():
    rng = np.random.default_rng(2)
    law = MpLaw(0.5)
    x = rng.uniform(0.0, 1.2 * law.support_hi, 50)
    np.testing.assert_allclose(two_delta_density(x, 0.5, [1.0, 1.0], [0.4, 0.6]), mp_density(x, 0.5),
                               rtol=0, atol=1e-10)


def test_two_delta_roots_solve_fixed_point():
    x, gamma, lambdas, weights = 2.2, 0.5, [1.0, 8.0], [0.5, 0.5]
    for u in two_delta_roots(x, gamma, lambdas, weights):
        e = (u - 1) / gamma
        e_out = sum(w * lam * u / (lam - x * u) for lam, w in zip(lambdas, weights))
        assert abs(e_out - e) < 1e-8


def test_two_delta_density_positive_at_spurious_zero_abscissa():
    assert two_delta_density(2.2, 0.5, [1.0, 8.0], [0.5, 0.5]) > 0.01


def test_two_delta_density_mass():
    gamma, lambdas, weights = 0.5, [1.0, 8.0], [0.5, 0.5]
    total = 0.0
    for lo, hi in two_delta_support(gamma, lambdas, weights):
        part, _ = quad(lambda x: two_delta_density(x, gamma, lambdas, weights), lo, hi, limit=400)
        total += part
    assert total == pytest.approx(1.0, abs=1e-4)


def test_two_delta_support_splits_at_small_gamma():
    gamma, lambdas, weights = 0.05, [1.0, 8.0], [0.5, 0.5]
    intervals = two_delta_support(gamma, lambdas, weights)
    assert len(intervals) == 2
    (lo1, hi1), (lo2, hi2) = intervals
    assert lo1 < hi1 < lo2 < hi2
    assert two_delta_density((lo1 + hi1) / 2, gamma, lambdas, weights) > 0
    assert two_delta_density((hi1 + lo2) / 2, gamma, lambdas, weights) == 0.0
    # the exact support lies inside the dispersion bounds
    assert lo1 > (1 - np.sqrt(gamma)) ** 2 / 1.001
    assert hi2 < 8.0 * (1 + np.sqrt(gamma)) ** 2 * 1.001


def test_two_delta_validation():
    with pytest.raises(ValueError):
        two_delta_density(1.0, 0.5, [1.0], [1.0])
    with pytest.raises(ValueError):
        two_delta_density(1.0, 0.5, [1.0, 8.0], [0.6, 0.6])
