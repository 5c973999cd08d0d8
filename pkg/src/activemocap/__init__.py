"""Decentralized multi-MAV active perception: fusion, convex MPC with potential fields, simulation."""

from .metrics import RunMetrics
from .runner import run_scenario
from .scenario import ConfigError, Scenario, load_scenario, scenario_from_dict

__all__ = ["ConfigError", "RunMetrics", "Scenario", "load_scenario", "run_scenario", "scenario_from_dict"]
