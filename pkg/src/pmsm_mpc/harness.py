"""Closed-loop scenarios, the i_d = 0 FOC baseline, and trace metrics."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import VoltageBounds, build_constraint_set, uniform_collocation
from .cost import CostContext, assemble_cost
from .controller import (
    ControllerConfig,
    PredictiveTorqueController,
    controller_bounds,
    delay_compensate,
    torque_limit,
    speed_pi_step,
    ControllerState,
)
from .optimizer import solve_trajectory
from .qp_oracle import candidate_rows, enumerate_qp
from .machine_model import (
    DqVoltages,
    MachineParams,
    PlantState,
    flat_voltages,
    plant_step,
    power_loss,
    rad_to_rpm,
    rpm_to_rad,
    torque,
)

SPEED_MODE = "speed-control"
TORQUE_MODE = "torque-control-with-speed-held"
MPC = "mpc"
BASELINE = "baseline-foc"
MAX_CONSECUTIVE_FAULTS = 10

CSV_HEADER = ("time_s", "omega_rpm", "tau_ref_Nm", "tau_Nm", "id_A", "iq_A",
              "ud_V", "uq_V", "ploss_W", "lp_iters", "status")


class SimulationAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Reference schedule as ``(time_s, value)`` pairs.

    Values are rpm in speed mode and N*m in torque mode; each holds until the
    next entry.
    """

    mode: str = TORQUE_MODE
    schedule: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    duration: float = 0.01
    held_speed_rpm: float = 0.0
    seed: int = 0
    controller: str = MPC
    name: str = ""

    def __post_init__(self):
        if self.mode not in (SPEED_MODE, TORQUE_MODE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.controller not in (MPC, BASELINE):
            raise ValueError(f"unknown controller {self.controller!r}")
        times = [t for t, _ in self.schedule]
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule times must be strictly increasing")
        if not self.duration > times[-1]:
            raise ValueError("duration must exceed the last schedule time")
        object.__setattr__(self, "schedule", tuple((float(t), float(v)) for t, v in self.schedule))

    def reference(self, t: float) -> float:
        value = self.schedule[0][1] if t >= self.schedule[0][0] else 0.0
        for ts, v in self.schedule:
            if t + 1e-12 >= ts:
                value = v
        return value


@dataclass
class SimTrace:
    time: np.ndarray
    omega_rpm: np.ndarray
    tau_ref: np.ndarray
    tau: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    u_d: np.ndarray
    u_q: np.ndarray
    p_loss: np.ndarray
    lp_iters: np.ndarray
    status: list[str]
    fault: np.ndarray
    dt: float
    # per-sample solver costs for suboptimality statistics (nan: no LP)
    J0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    J_lin: np.ndarray = field(default_factory=lambda: np.zeros(0))
    solve_seconds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # controller inputs, kept so each solve can be reconstructed
    omega_rad: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pred_d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pred_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.time.size

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of samples with ``t0 <= t < t1``."""
        return (self.time >= t0 - 1e-12) & (self.time < t1 - 1e-12)

    def to_csv(self, fh=None) -> str | None:
        """Write the fixed-header CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for k in range(len(self)):
            w.writerow([
                repr(float(self.time[k])), repr(float(self.omega_rpm[k])),
                repr(float(self.tau_ref[k])), repr(float(self.tau[k])),
                repr(float(self.i_d[k])), repr(float(self.i_q[k])),
                repr(float(self.u_d[k])), repr(float(self.u_q[k])),
                repr(float(self.p_loss[k])), int(self.lp_iters[k]), self.status[k],
            ])
        return out.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, text: str, dt: float | None = None) -> SimTrace:
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != CSV_HEADER:
            raise ValueError("unexpected CSV header")
        body = rows[1:]
        col = lambda j: np.array([float(r[j]) for r in body])  # noqa: E731
        t = col(0)
        status = [r[10] for r in body]
        if dt is None:
            dt = float(t[1] - t[0]) if t.size > 1 else 0.0
        return cls(t, col(1), col(2), col(3), col(4), col(5), col(6), col(7), col(8),
                   col(9).astype(int), status, np.array([s == "fault" for s in status]), dt)


@dataclass
class FocState:
    int_d: float = 0.0
    int_q: float = 0.0


@dataclass(frozen=True)
class FocGains:
    kp_d: float
    ki_d: float
    kp_q: float
    ki_q: float

    @classmethod
    def pole_placement(cls, p: MachineParams, dt: float, fraction: float = 0.2) -> FocGains:
        """Pole-zero cancelling PI gains, closed-loop bandwidth ``fraction * 2*pi/dt``."""
        wc = fraction * 2.0 * math.pi / dt
        return cls(p.L_d * wc, p.R * wc, p.L_q * wc, p.R * wc)


def baseline_foc_step(
    measured,
    omega_M: float,
    tau_ref: float,
    state: FocState,
    p: MachineParams,
    gains: FocGains,
    vb: VoltageBounds,
    dt: float,
) -> DqVoltages:
    """Two independent PI current loops, i_d* = 0, with back-EMF feedforward.

    Mutates ``state``.  Integrators hold while their output is clamped.
    """
    iq_ref = min(max(tau_ref / p.torque_constant, -p.I_max), p.I_max)
    e_d = 0.0 - measured[0]
    e_q = iq_ref - measured[1]
    ff_q = p.n_p * omega_M * p.K
    raw_d = gains.kp_d * e_d + state.int_d
    raw_q = gains.kp_q * e_q + state.int_q + ff_q
    u_d, u_q = vb.clamp((raw_d, raw_q))
    if u_d == raw_d:
        state.int_d += gains.ki_d * e_d * dt
    if u_q == raw_q:
        state.int_q += gains.ki_q * e_q * dt
    return DqVoltages(u_d, u_q)


def _alloc(n: int) -> dict[str, np.ndarray]:
    names = ("omega_rpm", "tau_ref", "tau", "i_d", "i_q", "u_d", "u_q", "p_loss", "J0", "J_lin", "solve_seconds",
             "omega_rad", "pred_d", "pred_q")
    return {k: np.zeros(n) for k in names}


def run_closed_loop(sc: ScenarioConfig, cfg: ControllerConfig, p: MachineParams) -> SimTrace:
    """Simulate one scenario sample by sample.

    Per sample: measure, predict one step ahead under the voltage being
    applied, run the speed loop (speed mode), compute the next voltage, then
    advance the plant by ``dt`` under the current voltage.  The computed
    voltage takes effect one sample later.
    """
    dt = cfg.dt
    n = int(round(sc.duration / dt))
    omega0 = rpm_to_rad(sc.held_speed_rpm) if sc.mode == TORQUE_MODE else 0.0
    hold = sc.mode == TORQUE_MODE
    state = PlantState(omega_M=omega0)
    _, vb = controller_bounds(cfg, p)
    # start from zero current under the back-EMF voltage, clamped into the
    # box (at very high speed the zero-current state is not reachable)
    u_now = DqVoltages(*vb.clamp(flat_voltages((0.0, 0.0), (0.0, 0.0), omega0, p)))

    mpc = PredictiveTorqueController(p, cfg, u_init=u_now)
    tau_max = mpc.tau_max
    foc_gains = FocGains.pole_placement(p, dt)
    foc_state = FocState(int_q=0.0)
    pi_state = ControllerState()

    rec = _alloc(n)
    lp_iters = np.zeros(n, dtype=int)
    faults = np.zeros(n, dtype=bool)
    status: list[str] = []
    consecutive = 0
    t_arr = np.arange(n) * dt

    for k in range(n):
        t = t_arr[k]
        meas = state.currents
        omega = state.omega_M
        ref = sc.reference(t)
        if sc.mode == SPEED_MODE:
            tau_ref, pi_state = speed_pi_step(rpm_to_rad(ref), omega, pi_state, cfg.gains, dt, tau_max)
        else:
            tau_ref = ref

        tic = time.perf_counter()
        if sc.controller == MPC:
            u_next, info = mpc.step(meas, omega, tau_ref)
            diag = info.diagnostics
            st = "fault" if info.fault else ("lp" if diag.used_lp else "interior")
            lp_iters[k] = 0 if diag is None else diag.iterations
            rec["J0"][k] = np.nan if diag is None or not diag.used_lp else diag.J0
            rec["J_lin"][k] = np.nan if diag is None or not diag.used_lp else diag.J_lin
            faults[k] = info.fault
            rec["pred_d"][k], rec["pred_q"][k] = info.predicted
        else:
            pred = delay_compensate(meas, u_now, omega, dt, p, cfg.substeps)
            u_next = baseline_foc_step(pred, omega, tau_ref, foc_state, p, foc_gains, vb, dt)
            st = "foc"
            rec["pred_d"][k], rec["pred_q"][k] = pred
            rec["J0"][k] = rec["J_lin"][k] = np.nan
        rec["solve_seconds"][k] = time.perf_counter() - tic

        consecutive = consecutive + 1 if faults[k] else 0
        if consecutive > MAX_CONSECUTIVE_FAULTS:
            raise SimulationAborted(f"{consecutive} consecutive solver faults at t={t:.6g} s")

        rec["omega_rpm"][k] = rad_to_rpm(omega)
        rec["omega_rad"][k] = omega
        rec["tau_ref"][k] = tau_ref
        rec["tau"][k] = torque(meas.i_q, p)
        rec["i_d"][k], rec["i_q"][k] = meas
        rec["u_d"][k], rec["u_q"][k] = u_now
        rec["p_loss"][k] = power_loss(meas, abs(omega), p)
        status.append(st)

        state = plant_step(state, u_now, 0.0, dt, p, cfg.substeps, hold_speed=hold)
        u_now = u_next

    return SimTrace(
        time=t_arr, lp_iters=lp_iters, status=status, fault=faults, dt=dt,
        **{k: v for k, v in rec.items()},
    )


@dataclass(frozen=True)
class Windows:
    """Time windows for metric extraction.

    ``step`` is ``(t_step, t_end)`` for the torque response; ``steady`` is a
    list of ``(t0, t1)`` windows for averaged losses.
    """

    step: tuple[float, float] | None = None
    steady: tuple[tuple[float, float], ...] = ()
    pre_step: tuple[float, float] | None = None


@dataclass(frozen=True)
class Metrics:
    settle_time: float
    overshoot_pct: float
    id_deviation: float
    mean_loss: float
    max_lp_iters: int
    violations: int


def settle_time(t, y, target: float, band: float = 0.02) -> float:
    """Time from ``t[0]`` after which ``y`` stays within ``band*|target|`` of target."""
    tol = band * abs(target) if target != 0 else band
    outside = np.flatnonzero(np.abs(np.asarray(y) - target) > tol)
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last + 1 >= len(t):
        return math.inf
    # linear interpolation of the band crossing
    y0, y1 = abs(y[last] - target), abs(y[last + 1] - target)
    frac = (y0 - tol) / (y0 - y1) if y0 != y1 else 1.0
    return float(t[last] + frac * (t[last + 1] - t[last]) - t[0])


def overshoot_pct(y, start: float, target: float) -> float:
    span = target - start
    if span == 0:
        return 0.0
    peak = np.max((np.asarray(y) - start) / span)
    return float(max(0.0, (peak - 1.0) * 100.0))


def count_violations(tr: SimTrace, cb, vb, rel: float = 1e-6) -> int:
    """Samples whose current or voltage leaves its box by more than ``rel`` of the bound."""
    def out(v, lo, hi):
        return (v < lo - rel * max(abs(lo), 1.0)) | (v > hi + rel * max(abs(hi), 1.0))

    bad = (out(tr.i_d, cb.id_min, cb.id_max) | out(tr.i_q, cb.iq_min, cb.iq_max)
           | out(tr.u_d, vb.ud_min, vb.ud_max) | out(tr.u_q, vb.uq_min, vb.uq_max))
    return int(np.count_nonzero(bad))


def compute_metrics(tr: SimTrace, windows: Windows, cb=None, vb=None) -> Metrics:
    if windows.step is None:
        settle, over, id_dev = 0.0, 0.0, 0.0
    else:
        mask = tr.window(*windows.step)
        if not mask.any():
            raise ValueError("empty step window")
        t, tau = tr.time[mask], tr.tau[mask]
        target = float(tr.tau_ref[mask][-1])
        start = float(tau[0])
        settle = settle_time(t, tau, target) if not np.allclose(tau, target) else 0.0
        over = overshoot_pct(tau, start, target)
        if windows.pre_step is not None:
            pre = tr.window(*windows.pre_step)
            if not pre.any():
                raise ValueError("empty pre-step window")
            id_ref = float(np.mean(tr.i_d[pre]))
        else:
            id_ref = float(tr.i_d[mask][0])
        id_dev = float(np.max(np.abs(tr.i_d[mask] - id_ref)))
    losses = []
    for w in windows.steady:
        m = tr.window(*w)
        if not m.any():
            raise ValueError(f"empty steady window {w}")
        losses.append(tr.p_loss[m])
    mean_loss = float(np.mean(np.concatenate(losses))) if losses else 0.0
    viol = count_violations(tr, cb, vb) if cb is not None and vb is not None else 0
    return Metrics(settle, over, id_dev, mean_loss, int(tr.lp_iters.max(initial=0)), viol)


def default_windows(sc: ScenarioConfig, dt: float) -> Windows:
    """Metric windows derived from the schedule.

    Torque mode: the response window runs from the last reference change to
    the end, the pre-step window is the millisecond before it and the steady
    window the last 5 ms.  Speed mode: the last 20% of every segment.
    """
    times = [t for t, _ in sc.schedule] + [sc.duration]
    if sc.mode == TORQUE_MODE:
        t_step = sc.schedule[-1][0]
        prev = times[-3] if len(times) > 2 else 0.0
        pre = (max(prev, t_step - 1e-3), t_step) if t_step - prev >= dt else None
        steady = ((max(t_step, sc.duration - 5e-3), sc.duration),)
        return Windows((t_step, sc.duration), steady, pre)
    steady = tuple((b - 0.2 * (b - a), b) for a, b in zip(times, times[1:]) if b - a >= 5 * dt)
    return Windows(None, steady, None)


def closed_loop_cost(tr: SimTrace, W_L: float, window: tuple[float, float] | None = None) -> float:
    """Sum over samples of squared torque error plus ``W_L`` times the loss."""
    m = np.ones(len(tr), dtype=bool) if window is None else tr.window(*window)
    if not m.any():
        raise ValueError("empty cost window")
    err = tr.tau[m] - tr.tau_ref[m]
    return float(np.sum(err * err + W_L * tr.p_loss[m]))


def loss_reduction_pct(loss_mpc: float, loss_baseline: float) -> float:
    """Loss saved by the predictive controller, in percent of the baseline."""
    if loss_baseline <= 0:
        return math.nan
    return 100.0 * (loss_baseline - loss_mpc) / loss_baseline


@dataclass(frozen=True)
class BoundSample:
    time: float
    J0: float
    J_lin: float
    J_qp: float

    @property
    def J_C(self) -> float:
        return self.J_qp - self.J0

    def ratio(self) -> float:
        """``(J_lin - J0) / J_C``; the worst-case bound is the coefficient count."""
        return (self.J_lin - self.J0) / self.J_C if self.J_C > 0 else 0.0


def rebuild_problem(tr: SimTrace, k: int, cfg: ControllerConfig, p: MachineParams):
    """Cost and constraint rows the controller solved at sample ``k``."""
    tau_max = torque_limit(cfg, p)
    omega = float(tr.omega_rad[k])
    tau_ref = min(max(float(tr.tau_ref[k]), -tau_max), tau_max)
    cb, vb = controller_bounds(cfg, p, omega)
    i0 = (float(tr.pred_d[k]), float(tr.pred_q[k]))
    if cfg.id_freeze is not None:
        lo, hi = sorted((cfg.id_freeze, i0[0]))
        cb = replace(cb, id_min=lo, id_max=hi)
    ctx = CostContext(tau_ref, omega, i0, p, cfg.T, cfg.W_L, cfg.degree)
    cons = build_constraint_set(cb, vb, ctx, uniform_collocation(cfg.T, cfg.collocation_count))
    return assemble_cost(ctx), cons


def bound_samples(tr: SimTrace, cfg: ControllerConfig, p: MachineParams, limit: int | None = None) -> list[BoundSample]:
    """Exact constrained optimum for every sample that needed the LP.

    ``limit`` keeps an evenly spaced subset.
    """
    ks = np.flatnonzero(np.asarray(tr.status) == "lp")
    if limit is not None and ks.size > limit:
        ks = ks[np.linspace(0, ks.size - 1, limit).round().astype(int)]
    out = []
    for k in ks:
        q, cons = rebuild_problem(tr, int(k), cfg, p)
        x, diag = solve_trajectory(q, cons, cfg.max_iter)
        try:
            rows = candidate_rows(q, cons, x)
        except ValueError:
            rows = None
        hint = np.flatnonzero(cons.slack(x) <= 1e-7 * (1.0 + np.abs(cons.b)))
        qp = enumerate_qp(q, cons, rows=rows, hint=hint)
        out.append(BoundSample(float(tr.time[k]), diag.J0, diag.J_lin, qp.cost))
    return out


# built-in benchmark scenarios
SCENARIOS = {
    "speed_steps": ScenarioConfig(
        SPEED_MODE, ((0.0, 0.0), (0.005, 1000.0), (0.1, 2000.0), (0.2, 0.0)), 0.3, name="speed_steps"),
    "torque_step_0rpm": ScenarioConfig(
        TORQUE_MODE, ((0.0, 0.0), (0.005, 8.4)), 0.015, 0.0, name="torque_step_0rpm"),
    "torque_step_2000rpm": ScenarioConfig(
        TORQUE_MODE, ((0.0, 0.0), (0.005, 8.4)), 0.015, 2000.0, name="torque_step_2000rpm"),
    "torque_step_2400rpm": ScenarioConfig(
        TORQUE_MODE, ((0.0, 0.0), (0.005, 4.0)), 0.015, 2400.0, name="torque_step_2400rpm"),
}


def scenario(name: str, **overrides) -> ScenarioConfig:
    try:
        base = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}") from None
    return replace(base, **overrides) if overrides else base
