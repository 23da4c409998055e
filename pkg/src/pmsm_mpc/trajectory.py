"""Polynomial current trajectories over the prediction horizon.

Each axis current is ``sum_k alpha_k (t/T)**k``.  The constant coefficients are
the initial currents; the remaining ``degree`` coefficients per axis are the
free decision variables, ordered ``[alpha_d1..alpha_dn, alpha_q1..alpha_qn]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .machine_model import DqCurrents, DqVoltages, MachineParams, flat_voltages

DEFAULT_DEGREE = 3


@dataclass(frozen=True)
class PolynomialTrajectory:
    alpha_d: np.ndarray
    alpha_q: np.ndarray
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        ad = np.asarray(self.alpha_d, dtype=float)
        aq = np.asarray(self.alpha_q, dtype=float)
        if ad.shape != aq.shape or ad.ndim != 1 or ad.size < 2:
            raise ValueError("alpha_d and alpha_q must be equal-length 1-D arrays")
        object.__setattr__(self, "alpha_d", ad)
        object.__setattr__(self, "alpha_q", aq)

    @property
    def degree(self) -> int:
        return self.alpha_d.size - 1

    @classmethod
    def from_free(cls, i0, x, T: float) -> PolynomialTrajectory:
        """Build a trajectory from initial currents and free coefficients."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise ValueError("free coefficient vector must have even length")
        n = x.size // 2
        return cls(np.r_[i0[0], x[:n]], np.r_[i0[1], x[n:]], T)

    @property
    def free(self) -> np.ndarray:
        return np.r_[self.alpha_d[1:], self.alpha_q[1:]]


def _check_time(t: float, T: float) -> None:
    if not (0.0 <= t <= T * (1 + 1e-12)):
        raise ValueError(f"t={t!r} outside the horizon [0, {T!r}]")


def monomials(s: float, degree: int) -> np.ndarray:
    """``[1, s, s**2, ..., s**degree]``."""
    return s ** np.arange(degree + 1)


def monomial_derivatives(s: float, degree: int, T: float) -> np.ndarray:
    """Time derivatives of the normalized monomials, in 1/s."""
    k = np.arange(degree + 1)
    out = np.zeros(degree + 1)
    out[1:] = k[1:] * s ** (k[1:] - 1) / T
    return out


def eval_currents(traj: PolynomialTrajectory, t: float) -> DqCurrents:
    _check_time(t, traj.T)
    m = monomials(t / traj.T, traj.degree)
    return DqCurrents(float(traj.alpha_d @ m), float(traj.alpha_q @ m))


def eval_derivatives(traj: PolynomialTrajectory, t: float) -> DqCurrents:
    _check_time(t, traj.T)
    dm = monomial_derivatives(t / traj.T, traj.degree, traj.T)
    return DqCurrents(float(traj.alpha_d @ dm), float(traj.alpha_q @ dm))


def eval_voltages(traj: PolynomialTrajectory, t: float, omega_M: float, p: MachineParams) -> DqVoltages:
    """Voltages along the trajectory from the flat inverse model."""
    return flat_voltages(eval_currents(traj, t), eval_derivatives(traj, t), omega_M, p)


def current_affine(t: float, T: float, i0, degree: int = DEFAULT_DEGREE):
    """Currents at ``t`` as ``A @ x + c`` in the free coefficients.

    Returns ``A`` of shape (2, 2*degree) and ``c`` of shape (2,).
    """
    _check_time(t, T)
    m = monomials(t / T, degree)
    A = np.zeros((2, 2 * degree))
    A[0, :degree] = m[1:]
    A[1, degree:] = m[1:]
    return A, np.array([i0[0], i0[1]], dtype=float)


def voltage_affine(t: float, T: float, i0, omega_M: float, p: MachineParams, degree: int = DEFAULT_DEGREE):
    """Flat voltages at ``t`` as ``A @ x + c`` in the free coefficients."""
    _check_time(t, T)
    m = monomials(t / T, degree)[1:]
    dm = monomial_derivatives(t / T, degree, T)[1:]
    w_el = p.n_p * omega_M
    n = degree
    A = np.zeros((2, 2 * n))
    A[0, :n] = p.L_d * dm + p.R * m
    A[0, n:] = -w_el * p.L_q * m
    A[1, :n] = w_el * p.L_d * m
    A[1, n:] = p.L_q * dm + p.R * m
    # zero free coefficients leave the currents constant at i0
    c = np.array(flat_voltages(i0, (0.0, 0.0), omega_M, p))
    return A, c
