"""Quadratic cost over the free trajectory coefficients.

The cost integrates the squared torque error plus weighted machine losses over
the horizon and adds an end weight ``T * (tau(T) - tau_ref)**2``.  With
polynomial currents every integrand is a polynomial in ``t/T``, so the
integrals reduce to ``int_0^T (t/T)**m dt = T / (m + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .machine_model import DqCurrents, MachineParams, power_loss, torque
from .trajectory import DEFAULT_DEGREE, PolynomialTrajectory, eval_currents

DEFAULT_HORIZON = 2e-3
DEFAULT_LOSS_WEIGHT = 0.05


@dataclass(frozen=True)
class CostContext:
    tau_ref: float
    omega_M: float
    i0: DqCurrents
    p: MachineParams
    T: float = DEFAULT_HORIZON
    W_L: float = DEFAULT_LOSS_WEIGHT
    degree: int = DEFAULT_DEGREE

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.W_L < 0:
            raise ValueError("loss weight W_L must be nonnegative")
        if self.degree < 1:
            raise ValueError("polynomial degree must be at least 1")
        object.__setattr__(self, "i0", DqCurrents(float(self.i0[0]), float(self.i0[1])))


@dataclass(frozen=True)
class QuadraticCost:
    """``J(x) = x @ H @ x + g @ x + c``."""

    H: np.ndarray
    g: np.ndarray
    c: float


def _gram(degree: int, T: float) -> np.ndarray:
    k = np.arange(degree + 1)
    return T / (k[:, None] + k[None, :] + 1.0)


def assemble_cost(ctx: CostContext) -> QuadraticCost:
    p, T, n = ctx.p, ctx.T, ctx.degree
    a = p.torque_constant
    tau = ctx.tau_ref
    copper = 1.5 * p.R
    # iron losses use |omega| so the loss stays nonnegative at negative speed
    iron = 1.5 * p.n_p * abs(ctx.omega_M) * p.k_Fe

    G = _gram(n, T)
    g1 = T / (np.arange(n + 1) + 1.0)
    ones = np.ones(n + 1)

    Q_d = ctx.W_L * (copper + iron * p.L_d**2) * G
    Q_q = (a * a + ctx.W_L * (copper + iron * p.L_q**2)) * G + T * a * a * np.outer(ones, ones)
    lin_d = 2.0 * ctx.W_L * iron * p.L_d * p.K * g1
    lin_q = -2.0 * a * tau * (g1 + T * ones)
    const = 2.0 * T * tau * tau + ctx.W_L * iron * p.K**2 * T

    i_d0, i_q0 = ctx.i0
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = Q_d[1:, 1:]
    H[n:, n:] = Q_q[1:, 1:]
    g = np.r_[2.0 * i_d0 * Q_d[0, 1:] + lin_d[1:], 2.0 * i_q0 * Q_q[0, 1:] + lin_q[1:]]
    c = Q_d[0, 0] * i_d0**2 + lin_d[0] * i_d0 + Q_q[0, 0] * i_q0**2 + lin_q[0] * i_q0 + const
    return QuadraticCost(0.5 * (H + H.T), g, float(c))


def evaluate_cost(q: QuadraticCost, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ q.H @ x + q.g @ x + q.c)


def cost_gradient(q: QuadraticCost, x) -> np.ndarray:
    return (q.H + q.H.T) @ np.asarray(x, dtype=float) + q.g


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)


def quadrature_cost_oracle(ctx: CostContext, x) -> float:
    """Cost by 7-point Gauss-Legendre quadrature along the trajectory.

    Exact up to rounding for the degree <= 6 integrands of a cubic
    trajectory.  Kept independent of :func:`assemble_cost`.
    """
    traj = PolynomialTrajectory.from_free(ctx.i0, x, ctx.T)
    p = ctx.p

    def stage(t):
        s = eval_currents(traj, t)
        err = torque(s.i_q, p) - ctx.tau_ref
        return err * err + ctx.W_L * power_loss(s, abs(ctx.omega_M), p)

    ts = 0.5 * ctx.T * (_GL_NODES + 1.0)
    integral = 0.5 * ctx.T * sum(w * stage(t) for w, t in zip(_GL_WEIGHTS, ts))
    end_err = torque(eval_currents(traj, ctx.T).i_q, p) - ctx.tau_ref
    return float(integral + ctx.T * end_err * end_err)
