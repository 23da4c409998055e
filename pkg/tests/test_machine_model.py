import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmsm_mpc.machine_model import (
    DqCurrents,
    MachineParams,
    PlantState,
    coerce_fields,
    default_params_path,
    electrical_derivatives,
    flat_voltages,
    load_default_params,
    parse_kv_file,
    plant_step,
    power_loss,
    rad_to_rpm,
    rk4_currents,
    rpm_to_rad,
    torque,
)
from pmsm_mpc.controller import ControllerConfig

P = MachineParams()

currents = st.floats(-6.0, 6.0, allow_nan=False)
speeds = st.floats(-400.0, 400.0, allow_nan=False)


def test_rpm_round_trip():
    assert rpm_to_rad(60.0) == pytest.approx(2 * math.pi)
    assert rad_to_rpm(rpm_to_rad(2400.0)) == pytest.approx(2400.0)


def test_default_machine_values():
    assert (P.R, P.L_d, P.L_q, P.K, P.n_p) == (0.92, 4.8e-3, 7.2e-3, 0.334, 3)
    assert (P.k_Fe, P.I_max, P.U_dc) == (1.27, 5.6, 330.0)
    assert P.U_max == pytest.approx(247.5)
    assert P.torque_constant == pytest.approx(1.5 * 3 * 0.334)


def test_bundled_file_matches_defaults():
    assert load_default_params() == P
    assert MachineParams.from_file(default_params_path()) == P


@pytest.mark.parametrize("field,value", [("R", -1.0), ("L_d", 0.0), ("I_max", -5.6), ("n_p", 0)])
def test_invalid_parameters_rejected(field, value):
    with pytest.raises(ValueError):
        P.with_overrides(**{field: value})


def test_parameter_file_comments_and_unknown_keys(tmp_path):
    f = tmp_path / "m.params"
    f.write_text("# machine\nr = 1.5   # ohm\n\nn_p = 4\n")
    p = MachineParams.from_file(f)
    assert p.R == 1.5 and p.n_p == 4 and isinstance(p.n_p, int)
    assert p.L_d == P.L_d
    f.write_text("r = 1.0\nbogus = 2\n")
    with pytest.raises(KeyError, match="bogus"):
        MachineParams.from_file(f)
    f.write_text("r 1.0\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_kv_file(f)


def test_coerce_handles_optional_bool_and_str():
    out = coerce_fields(ControllerConfig, {"omega_max": "none", "voltage_box_per_sample": "yes",
                                           "current_box": "circle", "collocation_count": "8"})
    assert out == {"omega_max": None, "voltage_box_per_sample": True,
                   "current_box": "circle", "collocation_count": 8}
    with pytest.raises(ValueError, match="voltage_box_per_sample"):
        coerce_fields(ControllerConfig, {"voltage_box_per_sample": "maybe"})


@settings(max_examples=200, deadline=None)
@given(currents, currents, currents, currents, speeds)
def test_flat_voltages_invert_the_model(i_d, i_q, di_d, di_q, omega):
    s = DqCurrents(i_d, i_q)
    u = flat_voltages(s, (di_d * 1e3, di_q * 1e3), omega, P)
    ds = electrical_derivatives(s, u, omega, P)
    np.testing.assert_allclose(ds, (di_d * 1e3, di_q * 1e3), rtol=1e-9, atol=1e-6)


def test_equilibrium_is_held_by_integrator():
    s = DqCurrents(-1.2, 3.4)
    omega = rpm_to_rad(1500)
    u = flat_voltages(s, (0.0, 0.0), omega, P)
    np.testing.assert_allclose(rk4_currents(s, u, omega, 125e-6, P), s, atol=1e-9)


def test_rk4_matches_first_order_solution_at_standstill():
    # at zero speed each axis is an RL circuit: i(t) = u/R (1 - exp(-R t / L))
    u = (10.0, -20.0)
    dt = 125e-6
    s = DqCurrents(0.0, 0.0)
    for _ in range(40):
        s = rk4_currents(s, u, 0.0, dt, P)
    t = 40 * dt
    exact = (u[0] / P.R * (1 - math.exp(-P.R * t / P.L_d)), u[1] / P.R * (1 - math.exp(-P.R * t / P.L_q)))
    np.testing.assert_allclose(s, exact, rtol=1e-10)


def test_rk4_requires_positive_step():
    with pytest.raises(ValueError):
        rk4_currents((0, 0), (0, 0), 0.0, 0.0, P)


def test_torque_and_loss_formulas():
    assert torque(2.0, P) == pytest.approx(1.5 * 3 * 0.334 * 2.0)
    s = DqCurrents(-1.0, 2.0)
    omega = 100.0
    copper = 1.5 * 0.92 * 5.0
    iron = 1.5 * 3 * 100.0 * 1.27 * ((4.8e-3 * -1.0 + 0.334) ** 2 + (7.2e-3 * 2.0) ** 2)
    assert power_loss(s, omega, P) == pytest.approx(copper + iron, rel=1e-12)
    assert power_loss((0.0, 0.0), 0.0, P) == 0.0


def test_plant_step_hold_speed_and_acceleration():
    s0 = PlantState(DqCurrents(0.0, 4.0), omega_M=50.0)
    u = flat_voltages(s0.currents, (0.0, 0.0), 50.0, P)
    held = plant_step(s0, u, 0.0, 125e-6, P, hold_speed=True)
    assert held.omega_M == 50.0
    free = plant_step(s0, u, 0.0, 125e-6, P)
    expected = 50.0 + 125e-6 * (torque(4.0, P) - P.tau_friction * 50.0) / P.J_rot
    assert free.omega_M == pytest.approx(expected, rel=1e-9)
    assert 0.0 <= free.theta < 2 * math.pi


def test_plant_step_is_deterministic():
    s0 = PlantState(DqCurrents(0.3, -0.2), omega_M=12.0, theta=6.2)
    a = plant_step(s0, (5.0, 7.0), 0.1, 1e-4, P)
    b = plant_step(s0, (5.0, 7.0), 0.1, 1e-4, P)
    assert a == b


def test_reference_values():
    np.testing.assert_array_equal(electrical_derivatives((0, 0), (0, 0), 0.0, P), (0.0, 0.0))
    back_emf_rate = -3 * 100 * math.pi * 0.334 / 7.2e-3
    np.testing.assert_allclose(electrical_derivatives((0, 0), (0, 0), 100 * math.pi, P), (0.0, back_emf_rate))
    np.testing.assert_allclose(electrical_derivatives((0, 5.6), (0, 0.92 * 5.6), 0.0, P), (0.0, 0.0), atol=1e-12)
    assert torque(5.6, P) == pytest.approx(8.4168) and torque(-5.6, P) == pytest.approx(-8.4168)
    assert power_loss((0.0, 5.6), 0.0, P) == pytest.approx(43.2768)
    assert power_loss((0.0, 0.0), 209.44, P) == pytest.approx(1.5 * 3 * 209.44 * 1.27 * 0.334**2)
    np.testing.assert_allclose(flat_voltages((0, 5.6), (0, 0), 0.0, P), (0.0, 5.152))
    np.testing.assert_allclose(flat_voltages((0, 0), (0, 0), 100 * math.pi, P), (0.0, 3 * 100 * math.pi * 0.334))


def test_zero_state_stays_at_rest():
    s = plant_step(PlantState(), (0.0, 0.0), 0.0, 125e-6, P)
    assert s == PlantState()


def test_current_rise_at_standstill_matches_exact_solution():
    s = PlantState()
    for _ in range(8):
        s = plant_step(s, (0.0, 100.0), 0.0, 125e-6, P, hold_speed=True)
    exact = 100.0 / P.R * (1 - math.exp(-P.R * 1e-3 / P.L_q))
    assert s.currents.i_q == pytest.approx(exact, rel=5e-3)


def test_coasting_with_shorted_windings_dissipates_energy():
    def energy(s):
        i = s.currents
        return 0.5 * P.J_rot * s.omega_M**2 + 0.75 * (P.L_d * i.i_d**2 + P.L_q * i.i_q**2)

    s = PlantState(omega_M=200.0)
    e = [energy(s)]
    for _ in range(800):
        s = plant_step(s, (0.0, 0.0), 0.0, 125e-6, P)
        e.append(energy(s))
    assert np.all(np.diff(e) < 0)
    assert e[-1] < 1e-3 * e[0]
