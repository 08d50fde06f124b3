"""Discrete-event simulator for V2X collective perception message generation"""

from .config import (
    ConfigError,
    ConfigValidationError,
    ScenarioConfig,
    SimulationError,
    load_config,
)
from .models import Cpm, GenerationPolicy, PerceivedObject, PolicyVariant, VehicleState
from .scheduler import RunSummary, Simulation, SimulationResult, run, sweep

__version__ = "1.0.0"

__all__ = [
    "ConfigError",
    "ConfigValidationError",
    "Cpm",
    "GenerationPolicy",
    "PerceivedObject",
    "PolicyVariant",
    "RunSummary",
    "ScenarioConfig",
    "Simulation",
    "SimulationError",
    "SimulationResult",
    "VehicleState",
    "load_config",
    "run",
    "sweep",
]
