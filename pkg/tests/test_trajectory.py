import numpy as np
import pytest

from pmsm_mpc.machine_model import MachineParams, flat_voltages
from pmsm_mpc.trajectory import (
    PolynomialTrajectory,
    current_affine,
    eval_currents,
    eval_derivatives,
    eval_voltages,
    voltage_affine,
)

P = MachineParams()
T = 2e-3


def _random_traj(rng):
    i0 = rng.uniform(-3, 3, 2)
    x = rng.normal(0, 2, 6)
    return i0, x, PolynomialTrajectory.from_free(i0, x, T)


def test_free_round_trip_and_initial_value():
    rng = np.random.default_rng(0)
    i0, x, traj = _random_traj(rng)
    np.testing.assert_array_equal(traj.free, x)
    assert traj.degree == 3
    np.testing.assert_allclose(eval_currents(traj, 0.0), i0)


def test_value_at_horizon_end_is_coefficient_sum():
    rng = np.random.default_rng(1)
    i0, x, traj = _random_traj(rng)
    np.testing.assert_allclose(eval_currents(traj, T), (traj.alpha_d.sum(), traj.alpha_q.sum()))


def test_derivative_matches_central_difference():
    rng = np.random.default_rng(2)
    _, _, traj = _random_traj(rng)
    h = 1e-8
    for t in (2e-4, 1e-3, 1.7e-3):
        fd = (np.array(eval_currents(traj, t + h)) - np.array(eval_currents(traj, t - h))) / (2 * h)
        np.testing.assert_allclose(eval_derivatives(traj, t), fd, rtol=1e-5)


def test_voltages_follow_from_currents():
    rng = np.random.default_rng(3)
    _, _, traj = _random_traj(rng)
    omega = 150.0
    for t in (0.0, 5e-4, T):
        expected = flat_voltages(eval_currents(traj, t), eval_derivatives(traj, t), omega, P)
        np.testing.assert_allclose(eval_voltages(traj, t, omega, P), expected)


def test_affine_maps_reproduce_evaluation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        i0, x, traj = _random_traj(rng)
        omega = rng.uniform(-300, 300)
        for t in (0.0, T / 4, T / 2, T):
            A, c = current_affine(t, T, i0)
            np.testing.assert_allclose(A @ x + c, eval_currents(traj, t), atol=1e-12)
            A, c = voltage_affine(t, T, i0, omega, P)
            np.testing.assert_allclose(A @ x + c, eval_voltages(traj, t, omega, P), rtol=1e-12, atol=1e-9)


def test_times_outside_horizon_rejected():
    traj = PolynomialTrajectory.from_free((0, 0), np.zeros(6), T)
    with pytest.raises(ValueError):
        eval_currents(traj, -1e-6)
    with pytest.raises(ValueError):
        eval_currents(traj, 1.01 * T)


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        PolynomialTrajectory.from_free((0, 0), np.zeros(5), T)
    with pytest.raises(ValueError):
        PolynomialTrajectory(np.zeros(4), np.zeros(3), T)
    with pytest.raises(ValueError):
        PolynomialTrajectory(np.zeros(4), np.zeros(4), 0.0)


def test_higher_degree_supported():
    x = np.arange(10, dtype=float)
    traj = PolynomialTrajectory.from_free((1.0, 2.0), x, T)
    assert traj.degree == 5
    A, c = current_affine(T / 3, T, (1.0, 2.0), degree=5)
    np.testing.assert_allclose(A @ x + c, eval_currents(traj, T / 3))


def test_reference_values():
    zero = PolynomialTrajectory(np.zeros(4), np.zeros(4), T)
    assert eval_currents(zero, 0.7 * T) == (0.0, 0.0)
    assert eval_voltages(zero, 0.3 * T, 0.0, P) == (0.0, 0.0)
    np.testing.assert_allclose(eval_voltages(zero, 0.3 * T, 100 * np.pi, P), (0.0, 3 * 100 * np.pi * 0.334))
    ones = PolynomialTrajectory(np.zeros(4), np.ones(4), T)
    assert eval_currents(ones, T).i_q == pytest.approx(4.0)
    lin = PolynomialTrajectory(np.zeros(4), np.array([0.0, 1.0, 0.0, 0.0]), T)
    for t in (0.0, T / 3, T):
        assert eval_derivatives(lin, t).i_q == pytest.approx(1.0 / T)
    const = PolynomialTrajectory(np.full(4, 0.0) + [2.0, 0, 0, 0], np.array([1.0, 0, 0, 0]), T)
    assert eval_derivatives(const, T / 2) == (0.0, 0.0)


def test_voltages_are_affine_in_coefficients():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(2, 2, 4))
    zero = PolynomialTrajectory(np.zeros(4), np.zeros(4), T)
    ta, tb = PolynomialTrajectory(*a, T), PolynomialTrajectory(*b, T)
    tab = PolynomialTrajectory(a[0] + b[0], a[1] + b[1], T)
    for t in (0.0, T / 2, T):
        lhs = np.array(eval_voltages(tab, t, 123.0, P))
        rhs = (np.array(eval_voltages(ta, t, 123.0, P)) + eval_voltages(tb, t, 123.0, P)
               - eval_voltages(zero, t, 123.0, P))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)
