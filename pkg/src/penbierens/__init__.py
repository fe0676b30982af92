"""Penalized Bierens-type conditional moment tests with multiplier-bootstrap
critical values, penalty calibration and subvector confidence sets."""

__version__ = "0.1.0"

from .bootstrap import BootstrapConfig, BootstrapOutcome, p_value, critical_value, run_bootstrap
from .calibrate import LambdaChoice, PowerSurface, common_maxmin_lambda, maxmin_lambda, power_surface
from .errors import PenBierensError
from .infer import CiResult, invert_ci, subvector_ci, theta_grid
from .kernel import GammaBox, PenaltyGrid, Summands, eval_components, penalized_objective
from .model import Dataset, EisModel, LinearModel, RurModel, make_model, transform_instruments
from .optimizer import PathResult, PsoConfig, grid_maximize, pso_maximize, solution_path
from .sim import DgpSpec, McReport, McTest, generate, power_curve
from .subvector import SubvectorProblem, subvector_power_surface, subvector_test

__all__ = [
    "BootstrapConfig", "BootstrapOutcome", "CiResult", "Dataset", "DgpSpec", "EisModel", "GammaBox",
    "LambdaChoice", "LinearModel", "McReport", "McTest", "PathResult", "PenBierensError", "PenaltyGrid",
    "PowerSurface", "PsoConfig", "RurModel", "Summands", "SubvectorProblem", "common_maxmin_lambda",
    "critical_value", "eval_components", "generate", "grid_maximize", "invert_ci", "make_model",
    "maxmin_lambda", "p_value", "penalized_objective", "power_curve", "power_surface", "pso_maximize",
    "run_bootstrap", "solution_path", "subvector_ci", "subvector_power_surface", "subvector_test",
    "theta_grid", "transform_instruments",
]
