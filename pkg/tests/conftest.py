import numpy as np
import pytest

from pheballoc import (
    AllocationProblem,
    EmissionModel,
    EnergyModel,
    Route,
    RouteSegment,
    UtilityBuilder,
    build_utility,
    central_solve,
    data_path,
    load_fleet,
)
from pheballoc.utility import SectionValues

FIXTURE_E_AV = 250.0
# AIMD settings used for the fixture fleet (see data/scenario_fleet15.json)
FIXTURE_AIMD = {"alpha": 0.01, "beta": 0.5, "gamma_gain": 2500.0, "k_max": 30_000_000}


def unit_models(lo=5.0, hi=100.0):
    """Constant 1 kWh/km and 1 g/km models."""
    return EnergyModel(0.0, 0.0, 1.0, (lo, hi)), EmissionModel(a=0.0, b=1.0, valid_range=(lo, hi))


def utility_from_pairs(costs, values, bus_id="bus"):
    return build_utility(SectionValues(bus_id, np.asarray(costs, float), np.asarray(values, float)))


def random_utility(rng, n_sections=None, bus_id="bus"):
    n = n_sections or int(rng.integers(1, 13))
    return utility_from_pairs(rng.uniform(0.05, 2.0, n), rng.uniform(0.0, 5.0, n), bus_id)


@pytest.fixture(scope="session")
def fleet():
    return load_fleet(data_path("fleet15.json"))


@pytest.fixture(scope="session")
def fleet_utilities(fleet):
    return UtilityBuilder().fit().transform(fleet)


@pytest.fixture(scope="session")
def fixture_problem(fleet_utilities):
    return AllocationProblem(tuple(fleet_utilities), FIXTURE_E_AV)


@pytest.fixture(scope="session")
def fixture_oracle(fixture_problem):
    return central_solve(fixture_problem)


@pytest.fixture
def one_segment_route():
    return Route("solo", (RouteSegment(1.0, 50.0),))
