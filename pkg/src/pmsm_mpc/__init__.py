"""Suboptimal predictive torque control for permanent-magnet synchronous machines."""

from .controller import ControllerConfig, PiGains, PredictiveTorqueController
from .cost import CostContext, QuadraticCost, assemble_cost, evaluate_cost, quadrature_cost_oracle
from .harness import ScenarioConfig, SimTrace, compute_metrics, run_closed_loop, scenario
from .machine_model import DqCurrents, DqVoltages, MachineParams, PlantState, load_default_params, plant_step
from .optimizer import solve_trajectory
from .qp_oracle import enumerate_qp
from .simplex import StandardFormLP, simplex_solve
from .trajectory import PolynomialTrajectory

__version__ = "0.1.0"

__all__ = [
    "ControllerConfig", "CostContext", "DqCurrents", "DqVoltages", "MachineParams", "PiGains",
    "PlantState", "PolynomialTrajectory", "PredictiveTorqueController", "QuadraticCost",
    "ScenarioConfig", "SimTrace", "StandardFormLP", "assemble_cost", "compute_metrics",
    "enumerate_qp", "evaluate_cost", "load_default_params", "plant_step", "quadrature_cost_oracle",
    "run_closed_loop", "scenario", "simplex_solve", "solve_trajectory",
]
