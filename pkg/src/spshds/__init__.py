"""Simulation and certificate screening for two-time-scale stochastic hybrid systems."""

from .config import load_config
from .core import SystemDefinition, build_reduced_system
from .errors import (
    AssumptionViolation,
    ConfigurationError,
    EventBracketError,
    NoSolutionError,
    PreconditionError,
    SpshdsError,
)
from .executor import ExecConfig, RandomSolutionRecord, solve, solve_ensemble
from .flow import FlowConfig, integrate_flow, localize_event
from .library import EXAMPLE_NAMES, make_example

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConfigurationError",
    "EXAMPLE_NAMES",
    "EventBracketError",
    "ExecConfig",
    "FlowConfig",
    "NoSolutionError",
    "PreconditionError",
    "RandomSolutionRecord",
    "SpshdsError",
    "SystemDefinition",
    "build_reduced_system",
    "integrate_flow",
    "load_config",
    "localize_event",
    "make_example",
    "solve",
    "solve_ensemble",
]
