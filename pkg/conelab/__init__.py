"""Numerical laboratory for cone energies of the critical wave equation on a variable metric."""
from __future__ import annotations

import logging

from .config import RunConfig, load_config, parse_config_text
from .const import DOMAIN
from .errors import ConeLabError, ConfigError, CriterionFailed, NumericalAbort
from .fields import Grid
from .geodesic import GeodesicField, solve_eikonal
from .metric import MetricField
from .metric.registry import get_available_metrics, get_metric
from .obstacles import get_obstacle
from .scenario_manager import ScenarioManager, list_scenarios, run_scenario, scenario_config

__version__ = "1.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "DOMAIN",
    "ConeLabError",
    "ConfigError",
    "CriterionFailed",
    "GeodesicField",
    "Grid",
    "MetricField",
    "NumericalAbort",
    "RunConfig",
    "ScenarioManager",
    "get_available_metrics",
    "get_metric",
    "get_obstacle",
    "list_scenarios",
    "load_config",
    "parse_config_text",
    "run_scenario",
    "scenario_config",
    "solve_eikonal",
]
