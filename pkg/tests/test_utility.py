import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_utility, unit_models, utility_from_pairs
from oracles import GRID, knapsack_grid, knapsack_lp
from pheballoc import (
    DomainError,
    Route,
    RouteSegment,
    build_utility,
    derivative,
    discretize,
    evaluate,
    schedule_modes,
    section_values,
    synthetic_emission_model,
    EnergyModel,
)
from pheballoc.exceptions import ConfigError
from pheballoc.utility import write_schedule_csv, write_utility_csv


def one_section_route(length=0.01, speed=36.0):
    return discretize(Route("r", (RouteSegment(length, speed),)))


def test_section_values_unit_models():
    em, hm = unit_models()
    (sv,) = section_values(one_section_route(), em, hm)
    assert sv.index == 0
    assert sv.energy_cost == pytest.approx(0.01)
    assert sv.emission_value == pytest.approx(0.01)
    assert sv.ratio == pytest.approx(1.0)


def test_section_values_literal_mode():
    em, hm = unit_models()
    (sv,) = section_values(one_section_route(), em, hm, objective_mode="literal_paper")
    assert sv.emission_value == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        section_values(one_section_route(), em, hm, objective_mode="other")


def test_section_values_range_error_names_section():
    em, hm = unit_models(lo=5.0, hi=40.0)
    route = discretize(Route("r", (RouteSegment(0.02, 36.0), RouteSegment(0.1, 60.0))))
    with pytest.raises(DomainError, match="section 2: speed 60.0"):
        section_values(route, em, hm)


def test_fixture_totals_match_manifest(fleet, fleet_utilities):
    import json

    from pheballoc import data_path

    manifest = json.loads(data_path("fleet15_manifest.json").read_text())
    for u, m in zip(fleet_utilities, manifest["buses"]):
        assert u.capacity == pytest.approx(m["total_energy_kwh"], rel=1e-9)
        assert u.total_value == pytest.approx(m["total_emission_g"], rel=1e-9)


def test_two_section_breakpoints():
    u = utility_from_pairs([1.0, 1.0], [2.0, 1.0])
    assert u.breakpoints == [(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]
    for d in np.linspace(0, 2, 21):
        assert u(d) == pytest.approx(knapsack_lp([1, 1], [2, 1], d)[0], abs=1e-9)


def test_single_section_linear():
    u = utility_from_pairs([4.0], [10.0])
    for d in (0.0, 1.0, 2.5, 4.0):
        assert u(d) == pytest.approx(10.0 * d / 4.0)


def test_equal_ratios_linear():
    u = utility_from_pairs([1.0, 2.0, 0.5], [3.0, 6.0, 1.5])
    d = np.linspace(0, u.capacity, 17)
    assert np.allclose(u(d), 3.0 * d)
    assert len(u.segments[0]) == 1
    assert list(u.fill_order) == [0, 1, 2]  # stable on ties


def test_eval_endpoints_and_midpoint():
    u = utility_from_pairs([1.0, 3.0], [5.0, 3.0])
    assert u(0.0) == 0.0
    assert u(u.capacity) == pytest.approx(8.0)
    assert u(2.5) == pytest.approx((u(1.0) + u(4.0)) / 2)
    with pytest.raises(DomainError):
        evaluate(u, -0.1)
    with pytest.raises(DomainError):
        evaluate(u, 4.1)


def test_derivatives():
    u = utility_from_pairs([1.0, 3.0], [5.0, 3.0])
    assert derivative(u, 0.5, "left") == derivative(u, 0.5, "right") == 5.0
    assert derivative(u, 1.0, "left") == 5.0 and derivative(u, 1.0, "right") == 1.0
    assert derivative(u, 4.0, "right") == 0.0
    assert derivative(u, 0.0, "left") == 5.0
    with pytest.raises(DomainError):
        derivative(u, 5.0)
    with pytest.raises(ValueError):
        derivative(u, 1.0, "up")


def test_schedule_examples():
    u = utility_from_pairs([1.0, 1.0], [2.0, 1.0])
    assert np.all(schedule_modes(u, 0.0).gamma == 0)
    assert np.all(schedule_modes(u, 2.0).gamma == 1)
    s = schedule_modes(u, 1.5)
    assert s.gamma.tolist() == [1.0, 0.5]
    assert s.savings == pytest.approx(2.5)
    assert s.modes == ["EV", "SPLIT"]
    with pytest.raises(DomainError):
        schedule_modes(u, 2.5)


def test_schedule_route_order():
    # second section has the higher ratio so it is filled first
    u = utility_from_pairs([1.0, 1.0], [1.0, 2.0])
    assert schedule_modes(u, 1.0).gamma.tolist() == [0.0, 1.0]


def test_csv_exports(tmp_path):
    route = discretize(Route("r", (RouteSegment(0.05, 36.0), RouteSegment(0.03, 72.0))))
    u = build_utility(section_values(route, EnergyModel(), synthetic_emission_model()))
    write_utility_csv(u, tmp_path / "u.csv")
    write_schedule_csv(schedule_modes(u, u.capacity / 2), tmp_path / "s.csv", route)
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "section,parent_segment,length_km,speed_kmh,energy_kwh,gamma,mode"
    assert len(rows) == len(route) + 1
    assert (tmp_path / "u.csv").read_text().startswith("d_kwh,f_g\n0.0,0.0\n")


def test_oracle_equivalence_random_routes():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 13))
        costs, values = rng.uniform(0.05, 2.0, n), rng.uniform(0.0, 5.0, n)
        u = utility_from_pairs(costs, values)
        d = float(rng.uniform(0, u.capacity))
        lp, _ = knapsack_lp(costs, values, d)
        grid = knapsack_grid(costs, values, d)
        assert u(d) == pytest.approx(lp, abs=1e-7)
        assert grid - 1e-9 <= u(d) <= grid + values.max() * GRID + 1e-9


utilities = st.integers(0, 2**32 - 1).map(lambda s: random_utility(np.random.default_rng(s)))
fractions = st.floats(0.0, 1.0)


@settings(max_examples=200)
@given(utilities, fractions, fractions, fractions)
def test_concavity(u, a, b, lam):
    d1, d2 = a * u.capacity, b * u.capacity
    assert lam * u(d1) + (1 - lam) * u(d2) <= u(lam * d1 + (1 - lam) * d2) + 1e-9


@given(utilities, fractions, fractions)
def test_monotone(u, a, b):
    d1, d2 = sorted((a * u.capacity, b * u.capacity))
    assert u(d1) <= u(d2) + 1e-12


@given(utilities)
def test_structure(u):
    assert u(0.0) == 0.0
    assert np.all(np.diff(u.breakpoints_d) > 0)
    assert np.all(np.diff(u.slopes) <= 0)
    assert u.total_value == pytest.approx(u.section_value.sum())


@given(utilities, fractions)
def test_schedule_conservation(u, a):
    budget = a * u.capacity
    s = schedule_modes(u, budget)
    assert s.energy_used == pytest.approx(budget, abs=1e-9)
    assert s.savings == pytest.approx(u(budget), abs=1e-9)
    assert np.sum((s.gamma > 0) & (s.gamma < 1)) <= 1


@given(utilities, fractions)
def test_left_ge_right(u, a):
    d = a * u.capacity
    assert derivative(u, d, "left") >= derivative(u, d, "right")
