"""Phasor-domain simulation of a back-to-back converter between two AC networks."""

from .engine import Simulator, initialize, run
from .errors import BtbError, ModelError, ScenarioError
from .oracle import OracleConfig, run_fine, steady_state
from .output import SimulationLog, read_csv, write_csv
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    "BtbError",
    "ModelError",
    "OracleConfig",
    "Scenario",
    "ScenarioError",
    "SimulationLog",
    "Simulator",
    "initialize",
    "load_scenario",
    "parse_scenario",
    "read_csv",
    "run",
    "run_fine",
    "steady_state",
    "write_csv",
]
