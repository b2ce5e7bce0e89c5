"""Allocate a forecast of renewable energy across a fleet of plug-in hybrid buses.

Each bus turns an energy budget into CO2 savings through a concave utility
built from its route. Budgets are shared out by an exact water-filling
oracle, a sharing ADMM baseline, or a stochastic AIMD scheme that needs a
single congestion bit per round.
"""

from importlib.resources import files

from .aimd import AgentState, AimdConfig, Mask, aimd_solve, backoff_probability, bits_at_gap, comms_bits
from .baselines import AdmmConfig, admm_bits, admm_solve, central_solve, kkt_residual
from .estimators import AdmmAllocator, AimdAllocator, OracleAllocator, UtilityBuilder
from .exceptions import ConfigError, DomainError, RouteFileError
from .forecast import (
    ForecastSeries,
    UncertaintyModel,
    load_forecast_csv,
    nmae,
    run_with_uncertainty,
    synthetic_series,
)
from .models import EmissionModel, EnergyModel, emission_rate, energy_per_km, synthetic_emission_model
from .problem import Allocation, AllocationProblem, SolverTrace, oracle_gap
from .routes import Route, RouteSegment, SectionedRoute, discretize, generate_fleet, load_fleet
from .scenario import ScenarioConfig, ScenarioReport, compare, run
from .solvers import solve
from .utility import (
    ModeSchedule,
    SectionValue,
    UtilityFunction,
    build_utility,
    derivative,
    evaluate,
    schedule_modes,
    section_values,
)

__version__ = "0.1.0"

# eval is the natural name for utility evaluation but shadows a builtin
eval = evaluate


def data_path(name: str):
    """Path of a file shipped in ``pheballoc/data`` (fixture fleet, configs)."""
    return files(__name__).joinpath("data", name)


__all__ = [
    "AdmmAllocator", "AdmmConfig", "AgentState", "AimdAllocator", "AimdConfig", "Allocation",
    "AllocationProblem", "ConfigError", "DomainError", "EmissionModel", "EnergyModel", "ForecastSeries",
    "Mask", "ModeSchedule", "OracleAllocator", "Route", "RouteFileError", "RouteSegment", "ScenarioConfig",
    "ScenarioReport", "SectionValue", "SectionedRoute", "SolverTrace", "UncertaintyModel",
    "UtilityBuilder", "UtilityFunction", "admm_bits", "admm_solve", "aimd_solve", "backoff_probability",
    "bits_at_gap", "build_utility", "central_solve", "comms_bits", "compare", "data_path", "derivative",
    "discretize", "emission_rate", "energy_per_km", "evaluate", "generate_fleet", "kkt_residual",
    "load_fleet", "load_forecast_csv", "nmae", "oracle_gap", "run", "run_with_uncertainty",
    "schedule_modes", "section_values", "solve", "synthetic_emission_model", "synthetic_series",
]
