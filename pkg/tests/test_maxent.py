import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermocontrol.errors import DomainError, InfeasibleError, RangeError
from thermocontrol.maxent import (DiscreteMeasurement, hamiltonian, hessian_fd, information_gain,
                                  in_hull_interior, partition_function, solve_lambda, variance_matrix)

from conftest import random_measurement_arrays

COIN = dict(base_probs=[0.5, 0.5], random_vector=[0.0, 1.0])


@pytest.mark.parametrize("lam, expected", [(0.0, 1.0), (math.log(3), 2.0)])
def test_partition_two_outcomes(lam, expected):
    m = DiscreteMeasurement(**COIN, target=[0.5])
    assert partition_function(m, [lam]) == pytest.approx(expected, abs=1e-15)


def test_partition_three_outcomes_at_zero():
    m = DiscreteMeasurement([1 / 3, 1 / 3, 1 / 3], [-1.0, 0.0, 1.0], [0.0])
    assert partition_function(m, [0.0]) == pytest.approx(1.0, abs=1e-15)


def test_partition_overflow_is_range_error():
    m = DiscreteMeasurement(**COIN, target=[0.5])
    with pytest.raises(RangeError):
        partition_function(m, [1e6])
    # the logarithm is still available through the shifted sum
    assert hamiltonian(m, [1e6]) == pytest.approx(-(1e6 - math.log(2)))


@pytest.mark.parametrize("target, lam", [(0.5, 0.0), (0.75, math.log(3))])
def test_coin_lambda(target, lam):
    s = solve_lambda(DiscreteMeasurement(**COIN, target=[target]))
    assert s.lam[0] == pytest.approx(lam, abs=1e-10)


def test_symmetric_target_gives_uniform_density():
    s = solve_lambda(DiscreteMeasurement(**COIN, target=[0.5]))
    np.testing.assert_allclose(s.density, 1.0, atol=1e-12)


@pytest.mark.parametrize("target", [1.0, 0.0, 1.5, -0.2])
def test_target_outside_open_hull_is_infeasible(target):
    with pytest.raises(InfeasibleError):
        solve_lambda(DiscreteMeasurement(**COIN, target=[target]))


def test_information_gain_values():
    m = DiscreteMeasurement(**COIN, target=[0.75])
    s = solve_lambda(m)
    expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert information_gain(m, s) == pytest.approx(expected, abs=1e-12)
    assert information_gain(m, s) == pytest.approx(0.130812, abs=1e-6)
    m0 = DiscreteMeasurement(**COIN, target=[0.5])
    assert information_gain(m0, solve_lambda(m0)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("target, var", [(0.5, 0.25), (0.75, 0.1875)])
def test_bernoulli_variance(target, var):
    m = DiscreteMeasurement(**COIN, target=[target])
    assert variance_matrix(m, solve_lambda(m))[0, 0] == pytest.approx(var, abs=1e-12)


def test_independent_components_are_uncorrelated():
    # product of two coins with different biases
    q = np.full(4, 0.25)
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    m = DiscreteMeasurement(q, X, [0.3, 0.8])
    V = variance_matrix(m, solve_lambda(m))
    assert abs(V[0, 1]) <= 1e-10
    np.testing.assert_allclose(np.diag(V), [0.3 * 0.7, 0.8 * 0.2], atol=1e-10)


@pytest.mark.parametrize("bad", [
    dict(base_probs=[0.5, 0.6], random_vector=[0, 1], target=[0.5]),
    dict(base_probs=[1.0, 0.0], random_vector=[0, 1], target=[0.5]),
    dict(base_probs=[0.5, 0.5], random_vector=[0, 1, 2], target=[0.5]),
    dict(base_probs=[0.5, 0.5], random_vector=[0, 1], target=[0.5, 0.5]),
])
def test_invalid_measurements(bad):
    with pytest.raises(DomainError):
        DiscreteMeasurement(**bad)


def test_hull_interior_rejects_faces():
    square = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    assert in_hull_interior(square, [0.5, 0.5])
    assert not in_hull_interior(square, [0.5, 0.0])
    assert not in_hull_interior(square, [2.0, 0.5])


def test_solution_json_keys():
    m = DiscreteMeasurement(**COIN, target=[0.75])
    assert set(solve_lambda(m).to_json()) == {"lambda", "density", "info_gain"}


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_duality_and_moments(seed):
    rng = np.random.default_rng(seed)
    q, X, x = random_measurement_arrays(rng)
    m = DiscreteMeasurement(q, X, x)
    s = solve_lambda(m)
    p = s.density * q
    assert abs(p.sum() - 1) <= 1e-10
    assert np.max(np.abs(p @ m.random_vector - x)) <= 1e-10
    assert s.info_gain >= -1e-15
    assert information_gain(m, s) == pytest.approx(s.hamiltonian + s.lam @ x, abs=1e-10)
    V = variance_matrix(m, s)
    assert np.min(np.linalg.eigvalsh(V)) >= -1e-12
    np.testing.assert_allclose(V, -hessian_fd(m, s.lam), atol=1e-8)


def test_information_gain_is_legendrian():
    # along x(t), dI/dt = <lambda, dx/dt>
    rng = np.random.default_rng(3)
    q, X, _ = random_measurement_arrays(rng, k=6, d=2)
    a, b = rng.dirichlet(np.ones(6)) @ X, rng.dirichlet(np.ones(6)) @ X

    def solve_at(t):
        m = DiscreteMeasurement(q, X, a + t * (b - a))
        return solve_lambda(m)

    h = 1e-4
    for t in (0.2, 0.5, 0.8):
        dI = (solve_at(t + h).info_gain - solve_at(t - h).info_gain) / (2 * h)
        assert dI == pytest.approx(float(solve_at(t).lam @ (b - a)), abs=1e-6)
