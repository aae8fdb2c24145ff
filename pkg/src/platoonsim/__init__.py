"""Mixed-traffic highway microsimulator for cooperative platooning studies."""

from .core import (FleetComposition, Gap, VehicleClass, VehicleProfile,
                   VehicleState, World, compose_fleet)
from .engine import RunResult, ScenarioConfig, Simulation, run_scenario
from .metrics import RunMetrics

__all__ = [
    "FleetComposition", "Gap", "VehicleClass", "VehicleProfile", "VehicleState",
    "World", "compose_fleet", "RunResult", "ScenarioConfig", "Simulation",
    "run_scenario", "RunMetrics",
]

__version__ = "0.1.0"
