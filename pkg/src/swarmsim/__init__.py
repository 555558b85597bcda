"""Simulator for an age-structured two-phase bacterial swarm colony model."""

from .config import RunConfig, build, load_config, parse_config, reference_config, serialize_config
from .model import Problem, SolverConfig, SystemState
from .solver import StepFailure, StepReport, advance_direct, advance_picard, initial_state, run

__all__ = [
    "Problem", "RunConfig", "SolverConfig", "StepFailure", "StepReport", "SystemState",
    "advance_direct", "advance_picard", "build", "initial_state", "load_config",
    "parse_config", "reference_config", "run", "serialize_config",
]
__version__ = "0.1.0"
