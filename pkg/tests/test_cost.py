import numpy as np
import pytest

from pmsm_mpc.cost import (
    CostContext,
    assemble_cost,
    cost_gradient,
    evaluate_cost,
    quadrature_cost_oracle,
)
from pmsm_mpc.machine_model import MachineParams

from instances import random_context

P = MachineParams()


def test_constant_term_for_unit_torque_at_rest():
    # zero currents held over T: squared error 1 integrated plus the end weight T * 1
    q = assemble_cost(CostContext(1.0, 0.0, (0.0, 0.0), P))
    assert q.c == pytest.approx(0.004, rel=1e-12)
    assert evaluate_cost(q, np.zeros(6)) == pytest.approx(quadrature_cost_oracle(
        CostContext(1.0, 0.0, (0.0, 0.0), P), np.zeros(6)))


def test_matches_quadrature_on_random_contexts():
    rng = np.random.default_rng(7)
    for _ in range(200):
        ctx = random_context(rng)
        q = assemble_cost(ctx)
        x = rng.normal(0, 3, 6)
        ref = quadrature_cost_oracle(ctx, x)
        assert abs(evaluate_cost(q, x) - ref) <= 1e-8 * abs(ref)


@pytest.mark.parametrize("degree", [1, 2, 4, 5])
def test_other_degrees_match_quadrature_when_exact(degree):
    # 7 Gauss points integrate polynomials up to degree 13 exactly
    rng = np.random.default_rng(degree)
    ctx = CostContext(3.0, 120.0, (-0.5, 1.0), P, degree=degree)
    x = rng.normal(0, 1, 2 * degree)
    ref = quadrature_cost_oracle(ctx, x)
    assert evaluate_cost(assemble_cost(ctx), x) == pytest.approx(ref, rel=1e-10)


def test_hessian_symmetric_positive_definite():
    rng = np.random.default_rng(8)
    for _ in range(50):
        q = assemble_cost(random_context(rng))
        np.testing.assert_array_equal(q.H, q.H.T)
        assert np.linalg.eigvalsh(q.H).min() > 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    ctx = random_context(rng)
    q = assemble_cost(ctx)
    x = rng.normal(0, 1, 6)
    h = 1e-6
    fd = np.array([(evaluate_cost(q, x + h * e) - evaluate_cost(q, x - h * e)) / (2 * h) for e in np.eye(6)])
    np.testing.assert_allclose(cost_gradient(q, x), fd, rtol=1e-6, atol=1e-9)


def test_negative_speed_uses_magnitude_for_losses():
    a = assemble_cost(CostContext(2.0, 200.0, (-1.0, 1.0), P))
    b = assemble_cost(CostContext(2.0, -200.0, (-1.0, 1.0), P))
    np.testing.assert_allclose(a.H, b.H)
    np.testing.assert_allclose(a.g, b.g)
    assert a.c == pytest.approx(b.c)


def test_cost_is_nonnegative():
    rng = np.random.default_rng(10)
    for _ in range(100):
        ctx = random_context(rng)
        assert evaluate_cost(assemble_cost(ctx), rng.normal(0, 5, 6)) >= 0


@pytest.mark.parametrize("kw", [{"T": 0.0}, {"W_L": -0.1}, {"degree": 0}])
def test_invalid_context_rejected(kw):
    with pytest.raises(ValueError):
        CostContext(1.0, 0.0, (0.0, 0.0), P, **kw)


def test_zero_reference_at_rest_is_minimized_at_zero():
    q = assemble_cost(CostContext(0.0, 0.0, (0.0, 0.0), P))
    assert q.c == 0.0
    np.testing.assert_allclose(np.linalg.solve(2 * q.H, -q.g), 0.0)


def test_constant_rated_current_without_losses():
    # i_q held at 5.6 A: constant error (tau(5.6) - tau_ref) over T plus the end weight
    ctx = CostContext(8.0, 0.0, (0.0, 5.6), P, W_L=0.0)
    err = P.torque_constant * 5.6 - 8.0
    assert evaluate_cost(assemble_cost(ctx), np.zeros(6)) == pytest.approx(2 * ctx.T * err**2, rel=1e-12)


def test_value_at_origin_is_constant_term():
    rng = np.random.default_rng(12)
    q = assemble_cost(random_context(rng))
    assert evaluate_cost(q, np.zeros(6)) == pytest.approx(q.c, rel=1e-14)
