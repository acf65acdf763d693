"""Disturbance-adaptive MPC with conformal disturbance bounds and FRI invariance."""

from .conformal import CalibrationSet, quantile, w_bound
from .config import BenchmarkSpec
from .controller import ConfidenceState, ControllerVariant, dad_step, update_confidence
from .exceptions import (ConfigError, DadMpcError, EmptyRci, FeasibilityFault, NoConvergence,
                         SolverFailure)
from .geometry import BoxSet, HPolytope
from .invariance import FriParams, PlantModel, SetLadder, build_ladder, fri_constraint, pre_set
from .mpc import MpcConfig, solve_policy
from .simulation import SimulationContext, run_closed_loop, sweep

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec", "BoxSet", "CalibrationSet", "ConfidenceState", "ConfigError",
    "ControllerVariant", "DadMpcError", "EmptyRci", "FeasibilityFault", "FriParams",
    "HPolytope", "MpcConfig", "NoConvergence", "PlantModel", "SetLadder",
    "SimulationContext", "SolverFailure", "build_ladder", "dad_step", "fri_constraint",
    "pre_set", "quantile", "run_closed_loop", "solve_policy", "sweep", "update_confidence",
    "w_bound",
]
