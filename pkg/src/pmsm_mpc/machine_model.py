"""dq-frame model of a surface-mounted PMSM.

Speeds are mechanical rad/s throughout; ``n_p * omega_M`` is the electrical
speed.  Currents and the motor constant are peak values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def rpm_to_rad(rpm: float) -> float:
    return rpm * TWO_PI / 60.0


def rad_to_rpm(omega: float) -> float:
    return omega * 60.0 / TWO_PI


@dataclass(frozen=True)
class MachineParams:
    """Electrical and mechanical constants of the machine.

    Defaults are the Merkes MT5 1050 nameplate.  ``J_rot`` and
    ``tau_friction`` are not on the nameplate and only matter for the
    speed-loop simulation.
    """

    R: float = 0.92
    L_d: float = 4.8e-3
    L_q: float = 7.2e-3
    K: float = 0.334
    n_p: int = 3
    k_Fe: float = 1.27
    I_max: float = 5.6
    U_dc: float = 330.0
    u_limit_fraction: float = 0.75
    omega_rated: float = 100.0 * math.pi
    J_rot: float = 2e-3
    tau_friction: float = 1e-4

    def __post_init__(self):
        checks = {
            "R": self.R > 0,
            "L_d": self.L_d > 0,
            "L_q": self.L_q > 0,
            "K": self.K > 0,
            "n_p": int(self.n_p) == self.n_p and self.n_p >= 1,
            "k_Fe": self.k_Fe >= 0,
            "I_max": self.I_max > 0,
            "U_dc": self.U_dc > 0,
            "u_limit_fraction": 0 < self.u_limit_fraction <= 1,
            "omega_rated": self.omega_rated > 0,
            "J_rot": self.J_rot > 0,
            "tau_friction": self.tau_friction >= 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid machine parameters: {', '.join(bad)}")

    @property
    def U_max(self) -> float:
        """Usable voltage-vector magnitude."""
        return self.u_limit_fraction * self.U_dc

    @property
    def torque_constant(self) -> float:
        """Torque per ampere of q-axis current, 3/2 n_p K."""
        return 1.5 * self.n_p * self.K

    def with_overrides(self, **kwargs) -> MachineParams:
        return replace(self, **kwargs)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_file(cls, path: str | Path) -> MachineParams:
        """Read a ``key = value`` parameter file (``#`` starts a comment)."""
        return cls(**coerce_fields(cls, parse_kv_file(path)))


def coerce_fields(cls, values: dict[str, str]) -> dict:
    """Map ``key -> text`` onto dataclass fields, matching names case-insensitively."""
    by_lower = {f.name.lower(): f for f in fields(cls)}
    unknown = sorted(k for k in values if k.lower() not in by_lower)
    if unknown:
        raise KeyError(f"unknown key(s) for {cls.__name__}: {', '.join(unknown)}")
    out = {}
    for key, raw in values.items():
        f = by_lower[key.lower()]
        kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        try:
            out[f.name] = _coerce(kind, raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from None
    return out


_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _coerce(kind: str, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = "None" in kind
    if optional and text.lower() in ("none", ""):
        return None
    base = kind.replace("| None", "").strip()
    if base == "int":
        return int(text)
    if base == "bool":
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValueError("expected a boolean")
    if base == "str":
        return text
    return float(text)


def parse_kv_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def default_params_path() -> Path:
    return Path(__file__).parent / "data" / "merkes_mt5_1050.params"


class DqCurrents(NamedTuple):
    i_d: float
    i_q: float


class DqVoltages(NamedTuple):
    u_d: float
    u_q: float


@dataclass(frozen=True)
class PlantState:
    currents: DqCurrents = DqCurrents(0.0, 0.0)
    omega_M: float = 0.0
    theta: float = 0.0


def electrical_derivatives(s, u, omega_M: float, p: MachineParams) -> DqCurrents:
    """Current derivatives (A/s) of the dq voltage equations."""
    w_el = p.n_p * omega_M
    did = (-p.R * s[0] + w_el * p.L_q * s[1] + u[0]) / p.L_d
    diq = (-p.R * s[1] - w_el * p.L_d * s[0] - w_el * p.K + u[1]) / p.L_q
    return DqCurrents(did, diq)


def flat_voltages(s, ds_dt, omega_M: float, p: MachineParams) -> DqVoltages:
    """Voltages that produce the current derivative ``ds_dt`` at state ``s``."""
    w_el = p.n_p * omega_M
    u_d = p.L_d * ds_dt[0] + p.R * s[0] - w_el * p.L_q * s[1]
    u_q = p.L_q * ds_dt[1] + p.R * s[1] + w_el * p.L_d * s[0] + w_el * p.K
    return DqVoltages(u_d, u_q)


def torque(i_q, p: MachineParams):
    return p.torque_constant * i_q


def power_loss(s, omega_M: float, p: MachineParams):
    """Copper plus hysteresis iron losses (W).

    ``omega_M`` enters with its sign; pass ``abs(omega_M)`` for a loss that
    stays nonnegative at negative speed.
    """
    i_d, i_q = s[0], s[1]
    copper = 1.5 * p.R * (i_d * i_d + i_q * i_q)
    psi_d = p.L_d * i_d + p.K
    psi_q = p.L_q * i_q
    iron = 1.5 * p.n_p * omega_M * p.k_Fe * (psi_d * psi_d + psi_q * psi_q)
    return copper + iron


def rk4_currents(s, u, omega_M: float, dt: float, p: MachineParams, substeps: int = 4) -> DqCurrents:
    """Integrate the electrical equations over ``dt`` with ``u`` held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    h = dt / substeps
    x = np.array([s[0], s[1]], dtype=float)
    f = lambda y: np.array(electrical_derivatives(y, u, omega_M, p))  # noqa: E731
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return DqCurrents(float(x[0]), float(x[1]))


def plant_step(
    state: PlantState,
    u,
    tau_load: float,
    dt: float,
    p: MachineParams,
    substeps: int = 4,
    hold_speed: bool = False,
) -> PlantState:
    """Advance the plant by one control period.

    The electrical state is integrated with speed frozen at its value at the
    start of the period; the mechanical state then takes one explicit Euler
    step using the mean electromagnetic torque over the period.  With
    ``hold_speed`` the speed is pinned, as by an ideal load drive.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    omega = state.omega_M
    new_i = rk4_currents(state.currents, u, omega, dt, p, substeps)
    if hold_speed:
        new_omega = omega
    else:
        tau_m = 0.5 * (torque(state.currents.i_q, p) + torque(new_i.i_q, p))
        domega = (tau_m - tau_load - p.tau_friction * omega) / p.J_rot
        new_omega = omega + dt * domega
    theta = (state.theta + dt * 0.5 * (omega + new_omega)) % TWO_PI
    return PlantState(new_i, float(new_omega), float(theta))


def load_default_params() -> MachineParams:
    return MachineParams.from_file(default_params_path())
