"""Linearized current and voltage limits as affine rows on the free coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import CostContext
from .machine_model import MachineParams
from .trajectory import current_affine, voltage_affine

CURRENT_BOX_RULES = ("full-q", "circle")
VOLTAGE_BOX_RULES = ("symmetric", "farthest-corner")


class FieldWeakeningUnavailable(ValueError):
    """The loss-optimal d-axis current is undefined (no iron loss or no speed)."""


@dataclass(frozen=True)
class CurrentBounds:
    id_min: float
    id_max: float
    iq_min: float
    iq_max: float

    def __post_init__(self):
        if not (self.id_min <= self.id_max and self.iq_min < self.iq_max):
            raise ValueError(f"degenerate current box {self}")


@dataclass(frozen=True)
class VoltageBounds:
    ud_min: float
    ud_max: float
    uq_min: float
    uq_max: float

    def __post_init__(self):
        if not (self.ud_min < 0 < self.ud_max and self.uq_min < 0 < self.uq_max):
            raise ValueError(f"voltage rectangle must contain the origin: {self}")

    def clamp(self, u):
        return (
            min(max(u[0], self.ud_min), self.ud_max),
            min(max(u[1], self.uq_min), self.uq_max),
        )

    def corner_radius(self) -> float:
        return math.hypot(max(-self.ud_min, self.ud_max), max(-self.uq_min, self.uq_max))


@dataclass(frozen=True)
class LinearConstraintSet:
    """Rows ``A[i] @ x <= b[i]`` with a label per row."""

    A: np.ndarray
    b: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size or len(self.labels) != b.size:
            raise ValueError("A, b and labels must have matching row counts")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("constraint rows must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return self.b.size

    @property
    def rows(self):
        return list(zip(self.A, self.b, self.labels))

    def slack(self, x) -> np.ndarray:
        return self.b - self.A @ np.asarray(x, dtype=float)

    def satisfied(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.slack(x) >= -tol))

    def violated(self, x, tol: float = 1e-9) -> list[str]:
        return [lab for lab, s in zip(self.labels, self.slack(x)) if s < -tol]

    def active(self, x, tol: float = 1e-7) -> list[str]:
        return [lab for lab, s in zip(self.labels, self.slack(x)) if abs(s) <= tol]


def id_min_optimal(p: MachineParams, omega: float) -> float:
    """d-axis current that minimizes the losses at speed ``omega`` (zero q-current)."""
    if omega <= 0 or p.k_Fe <= 0:
        raise FieldWeakeningUnavailable("needs omega > 0 and k_Fe > 0")
    return -p.L_d * p.K / (p.L_d**2 + p.R / (p.n_p * omega * p.k_Fe))


def current_bounds(p: MachineParams, rule: str = "full-q") -> CurrentBounds:
    """Current box: ``i_d`` in ``[id_min, 0]``, ``i_q`` symmetric.

    ``id_min`` is twice the loss-optimal value at rated speed, but never below
    ``-I_max/2``.  With ``rule="full-q"`` the q-range is the full ``+-I_max``;
    ``rule="circle"`` puts the box corners on the current circle instead.
    """
    if rule not in CURRENT_BOX_RULES:
        raise ValueError(f"unknown current box rule {rule!r}")
    try:
        id_min = max(2.0 * id_min_optimal(p, p.omega_rated), -0.5 * p.I_max)
    except FieldWeakeningUnavailable:
        id_min = 0.0
    if rule == "full-q":
        iq_max = p.I_max
    else:
        iq_max = math.sqrt(p.I_max**2 - id_min**2)
    return CurrentBounds(id_min, 0.0, -iq_max, iq_max)


def steady_state_rectangle(p: MachineParams, cb: CurrentBounds, omega_max: float):
    """Voltage rectangle from the steady-state voltage equations, before expansion."""
    w = p.n_p * omega_max
    ud_min = p.R * cb.id_min - w * p.L_q * cb.iq_max
    ud_max = w * p.L_q * cb.iq_max
    uq_min = -p.R * cb.iq_max + w * p.L_d * cb.id_min - w * p.K
    uq_max = p.R * cb.iq_max + w * p.K
    return ud_min, ud_max, uq_min, uq_max


def voltage_bounds(
    p: MachineParams,
    cb: CurrentBounds,
    omega_max: float | None = None,
    rule: str = "symmetric",
) -> VoltageBounds:
    """Voltage rectangle scaled so its outer corner lies on the ``U_max`` circle.

    ``rule="farthest-corner"`` scales the raw steady-state rectangle by one
    factor.  ``rule="symmetric"`` first widens it to be symmetric about the
    origin, so every corner ends on the circle and the q-axis keeps almost
    the whole ``U_max``.
    """
    if rule not in VOLTAGE_BOX_RULES:
        raise ValueError(f"unknown voltage box rule {rule!r}")
    omega_max = p.omega_rated if omega_max is None else omega_max
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    ud_min, ud_max, uq_min, uq_max = steady_state_rectangle(p, cb, omega_max)
    if min(ud_max - ud_min, uq_max - uq_min) <= 0 or ud_max <= 0 or uq_max <= 0:
        raise ValueError("degenerate voltage rectangle")
    if rule == "symmetric":
        a = max(-ud_min, ud_max)
        b = max(-uq_min, uq_max)
        ud_min, ud_max, uq_min, uq_max = -a, a, -b, b
    radius = math.hypot(max(-ud_min, ud_max), max(-uq_min, uq_max))
    gamma = p.U_max / radius
    return VoltageBounds(gamma * ud_min, gamma * ud_max, gamma * uq_min, gamma * uq_max)


def uniform_collocation(T: float, count: int = 4) -> list[float]:
    return [T * (k + 1) / count for k in range(count)]


def build_constraint_set(
    cb: CurrentBounds,
    vb: VoltageBounds,
    ctx: CostContext,
    collocation=None,
) -> LinearConstraintSet:
    """Eight rows per collocation time: both sides of i_d, i_q, u_d, u_q."""
    T = ctx.T
    times = uniform_collocation(T) if collocation is None else list(collocation)
    if not times:
        raise ValueError("collocation list is empty")
    for t in times:
        if not (0.0 < t <= T * (1 + 1e-12)):
            raise ValueError(f"collocation time {t!r} outside (0, T]")

    lo = {"i_d": cb.id_min, "i_q": cb.iq_min, "u_d": vb.ud_min, "u_q": vb.uq_min}
    hi = {"i_d": cb.id_max, "i_q": cb.iq_max, "u_d": vb.ud_max, "u_q": vb.uq_max}
    rows, rhs, labels = [], [], []
    for t in times:
        Ai, ci = current_affine(t, T, ctx.i0, ctx.degree)
        Au, cu = voltage_affine(t, T, ctx.i0, ctx.omega_M, ctx.p, ctx.degree)
        for name, a, c in (("i_d", Ai[0], ci[0]), ("i_q", Ai[1], ci[1]),
                           ("u_d", Au[0], cu[0]), ("u_q", Au[1], cu[1])):
            rows.append(a)
            rhs.append(hi[name] - c)
            labels.append(f"{name}<=max@{t:.6g}")
            rows.append(-a)
            rhs.append(c - lo[name])
            labels.append(f"{name}>=min@{t:.6g}")
    return LinearConstraintSet(np.array(rows), np.array(rhs), tuple(labels))
