"""Invasion waves in a two-prey, one-predator reaction-diffusion system."""

from .bvp import WaveProfile, continue_in_speed, sandwich, solve_invasion, solve_profile
from .equilibria import classify_Ec, eigen_split, integrate_kinetic, kinetic_jacobian, kinetic_rhs, tw_jacobian
from .errors import HypothesisViolated, InvalidParams, TripwaveError
from .model import PRESETS, Params, check_conditions, derive, validate
from .pde import Grid, Scenario, run, run_speed, tail_classify
from .waves_analytic import build_ul, eval_ul, lyapunov_check, lyapunov_phi, rectangle_signs, verify_ul

__all__ = [
    "PRESETS",
    "Params",
    "check_conditions",
    "derive",
    "validate",
    "TripwaveError",
    "InvalidParams",
    "HypothesisViolated",
    "kinetic_rhs",
    "kinetic_jacobian",
    "tw_jacobian",
    "eigen_split",
    "classify_Ec",
    "integrate_kinetic",
    "build_ul",
    "eval_ul",
    "verify_ul",
    "rectangle_signs",
    "lyapunov_phi",
    "lyapunov_check",
    "Grid",
    "Scenario",
    "run",
    "run_speed",
    "tail_classify",
    "WaveProfile",
    "solve_profile",
    "solve_invasion",
    "continue_in_speed",
    "sandwich",
]
