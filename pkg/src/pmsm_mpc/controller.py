"""Receding-horizon torque controller with delay compensation and PI speed loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

from .constraints import (
    CurrentBounds,
    VoltageBounds,
    build_constraint_set,
    current_bounds,
    uniform_collocation,
    voltage_bounds,
)
from .cost import DEFAULT_HORIZON, DEFAULT_LOSS_WEIGHT, CostContext, assemble_cost
from .machine_model import DqCurrents, DqVoltages, MachineParams, flat_voltages, rk4_currents
from .optimizer import DEFAULT_MAX_ITER, Diagnostics, NotPositiveDefinite, SolverFault, solve_trajectory
from .trajectory import DEFAULT_DEGREE, PolynomialTrajectory, eval_derivatives

FAULT_DECAY = 0.9


@dataclass(frozen=True)
class PiGains:
    k_p: float = 0.4
    k_i: float = 0.1

    def __post_init__(self):
        if self.k_p < 0 or self.k_i < 0:
            raise ValueError("PI gains must be nonnegative")


@dataclass(frozen=True)
class ControllerConfig:
    T: float = DEFAULT_HORIZON
    dt: float = 125e-6
    W_L: float = DEFAULT_LOSS_WEIGHT
    collocation_count: int = 4
    degree: int = DEFAULT_DEGREE
    k_p: float = 0.4
    k_i: float = 0.1
    max_iter: int = DEFAULT_MAX_ITER
    substeps: int = 4
    current_box: str = "full-q"
    voltage_box: str = "symmetric"
    omega_max: float | None = None
    voltage_box_per_sample: bool = False
    # ablation: confine i_d between its present value and this one
    id_freeze: float | None = None

    def __post_init__(self):
        if not (0 < self.dt < self.T):
            raise ValueError("need 0 < dt < T")
        if self.collocation_count < 1:
            raise ValueError("collocation_count must be at least 1")

    @property
    def gains(self) -> PiGains:
        return PiGains(self.k_p, self.k_i)


@dataclass(frozen=True)
class ControllerState:
    last_u: DqVoltages = DqVoltages(0.0, 0.0)
    integrator: float = 0.0
    diagnostics: Diagnostics | None = field(default=None, compare=False)
    fault: bool = False


@dataclass(frozen=True)
class StepInfo:
    diagnostics: Diagnostics | None
    fault: bool
    status: str
    x: object = None
    predicted: DqCurrents | None = None


@lru_cache(maxsize=64)
def _bounds(cfg: ControllerConfig, p: MachineParams, omega: float | None) -> tuple[CurrentBounds, VoltageBounds]:
    cb = current_bounds(p, cfg.current_box)
    vb = voltage_bounds(p, cb, omega, cfg.voltage_box)
    return cb, vb


def controller_bounds(cfg: ControllerConfig, p: MachineParams, omega_M: float = 0.0):
    """Current box and voltage rectangle used by the controller."""
    if cfg.voltage_box_per_sample and abs(omega_M) > 0:
        return _bounds(cfg, p, abs(omega_M))
    return _bounds(cfg, p, cfg.omega_max)


def torque_limit(cfg: ControllerConfig, p: MachineParams) -> float:
    cb, _ = controller_bounds(cfg, p)
    return p.torque_constant * cb.iq_max


def delay_compensate(measured, last_u, omega_M: float, dt: float, p: MachineParams, substeps: int = 4) -> DqCurrents:
    """Currents one sample ahead, from the model under the voltage being applied."""
    return rk4_currents(measured, last_u, omega_M, dt, p, substeps)


def torque_control_step(
    state: ControllerState,
    predicted,
    omega_M: float,
    tau_ref: float,
    cfg: ControllerConfig,
    p: MachineParams,
) -> tuple[DqVoltages, ControllerState, StepInfo]:
    """One receding-horizon solve; returns the voltage to apply next."""
    tau_max = torque_limit(cfg, p)
    tau_ref = min(max(tau_ref, -tau_max), tau_max)
    cb, vb = controller_bounds(cfg, p, omega_M)
    if cfg.id_freeze is not None:
        lo, hi = sorted((cfg.id_freeze, float(predicted[0])))
        cb = replace(cb, id_min=lo, id_max=hi)
    ctx = CostContext(tau_ref, omega_M, predicted, p, cfg.T, cfg.W_L, cfg.degree)
    cons = build_constraint_set(cb, vb, ctx, uniform_collocation(cfg.T, cfg.collocation_count))
    try:
        x, diag = solve_trajectory(assemble_cost(ctx), cons, cfg.max_iter)
    except (SolverFault, NotPositiveDefinite) as exc:
        status = getattr(exc, "status", "invalid-cost")
        u = vb.clamp((FAULT_DECAY * state.last_u[0], FAULT_DECAY * state.last_u[1]))
        u = DqVoltages(*u)
        new_state = replace(state, last_u=u, diagnostics=None, fault=True)
        return u, new_state, StepInfo(None, True, status, predicted=DqCurrents(*predicted))

    traj = PolynomialTrajectory.from_free(ctx.i0, x, cfg.T)
    u0 = flat_voltages(ctx.i0, eval_derivatives(traj, 0.0), omega_M, p)
    # collocation never covers t = 0 for the voltages
    u = DqVoltages(*vb.clamp(u0))
    new_state = replace(state, last_u=u, diagnostics=diag, fault=False)
    return u, new_state, StepInfo(diag, False, diag.status, x, DqCurrents(*predicted))


def speed_pi_step(
    omega_ref: float,
    omega_M: float,
    state: ControllerState,
    gains: PiGains,
    dt: float,
    tau_max: float,
) -> tuple[float, ControllerState]:
    """PI speed loop with output clamp and conditional integration."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = omega_ref - omega_M
    raw = gains.k_p * err + state.integrator
    tau = min(max(raw, -tau_max), tau_max)
    integ = state.integrator
    saturated_same_way = (raw > tau_max and err > 0) or (raw < -tau_max and err < 0)
    if not saturated_same_way:
        integ = min(max(integ + gains.k_i * err * dt, -tau_max), tau_max)
    return tau, replace(state, integrator=integ)


class PredictiveTorqueController:
    """Stateful wrapper running delay compensation plus one solve per sample."""

    def __init__(self, p: MachineParams, cfg: ControllerConfig | None = None, u_init=(0.0, 0.0)):
        self.p = p
        self.cfg = cfg or ControllerConfig()
        self.state = ControllerState(last_u=DqVoltages(*u_init))
        self.tau_max = torque_limit(self.cfg, p)

    def speed_loop(self, omega_ref: float, omega_M: float) -> float:
        tau, self.state = speed_pi_step(omega_ref, omega_M, self.state, self.cfg.gains, self.cfg.dt, self.tau_max)
        return tau

    def step(self, measured, omega_M: float, tau_ref: float) -> tuple[DqVoltages, StepInfo]:
        predicted = delay_compensate(measured, self.state.last_u, omega_M, self.cfg.dt, self.p, self.cfg.substeps)
        u, self.state, info = torque_control_step(self.state, predicted, omega_M, tau_ref, self.cfg, self.p)
        return u, info
