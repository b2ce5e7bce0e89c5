"""CO2-savings utilities built from the per-section EV/ICE decision.

For a given energy budget a bus chooses, per section, the fraction ``gamma``
driven in EV mode. Maximising saved emissions subject to the budget is a
continuous knapsack, solved exactly by filling sections in decreasing order of
saved grams per kWh. The resulting utility is piecewise linear and concave.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigError, DomainError
from .models import EmissionModel, EnergyModel
from .routes import SectionedRoute

OBJECTIVE_MODES = ("per_km_rate", "literal_paper")


class SectionValue(NamedTuple):
    index: int
    energy_cost: float
    emission_value: float
    ratio: float


@dataclass(frozen=True, eq=False)
class SectionValues:
    """Array-backed sequence of :class:`SectionValue` for one route."""

    bus_id: str
    energy_cost: np.ndarray
    emission_value: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.energy_cost, dtype=float)
        value = np.asarray(self.emission_value, dtype=float)
        if cost.shape != value.shape or cost.ndim != 1 or len(cost) == 0:
            raise ValueError("energy_cost and emission_value must be equal-length non-empty vectors")
        if np.any(cost <= 0):
            raise ValueError("section energy costs must be > 0")
        if np.any(value < 0):
            raise ValueError("section emission values must be >= 0")
        object.__setattr__(self, "energy_cost", cost)
        object.__setattr__(self, "emission_value", value)

    @property
    def ratio(self) -> np.ndarray:
        return self.emission_value / self.energy_cost

    def __len__(self) -> int:
        return len(self.energy_cost)

    def __getitem__(self, i: int) -> SectionValue:
        return SectionValue(i, float(self.energy_cost[i]), float(self.emission_value[i]), float(self.ratio[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def section_values(
    route: SectionedRoute,
    energy_model: EnergyModel,
    emission_model: EmissionModel,
    objective_mode: str = "per_km_rate",
) -> SectionValues:
    """Energy cost and saved emissions of driving each section fully in EV mode.

    ``objective_mode="per_km_rate"`` values a section at ``h(s) * L``;
    ``"literal_paper"`` uses ``h(s)`` alone, ignoring the section length.
    """
    if objective_mode not in OBJECTIVE_MODES:
        raise ConfigError(f"objective_mode must be one of {OBJECTIVE_MODES}, got {objective_mode!r}")
    speeds = route.speeds
    for model, name in ((energy_model, "energy"), (emission_model, "emission")):
        lo, hi = model.valid_range
        bad = np.flatnonzero((speeds < lo) | (speeds > hi))
        if bad.size:
            i = int(bad[0])
            raise DomainError(
                f"bus {route.bus_id!r} section {i}: speed {speeds[i]} km/h outside "
                f"{name} model range [{lo}, {hi}]"
            )
    cost = energy_model._raw(speeds) * route.lengths
    rate = emission_model._raw(speeds)
    value = rate * route.lengths if objective_mode == "per_km_rate" else np.array(rate, dtype=float)
    return SectionValues(route.bus_id, cost, value)


@dataclass(frozen=True, eq=False)
class UtilityFunction:
    """Piecewise-linear concave savings curve ``f(d)`` of one bus.

    ``breakpoints_d``/``breakpoints_f`` hold the cumulative energy and
    emission sums of the sections taken in ``fill_order``; ``slopes[j]`` is
    the ratio of the j-th section filled.
    """

    bus_id: str
    breakpoints_d: np.ndarray
    breakpoints_f: np.ndarray
    slopes: np.ndarray
    fill_order: np.ndarray
    section_cost: np.ndarray = field(repr=False)
    section_value: np.ndarray = field(repr=False)

    @property
    def capacity(self) -> float:
        return float(self.breakpoints_d[-1])

    @property
    def total_value(self) -> float:
        return float(self.breakpoints_f[-1])

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.breakpoints_d.tolist(), self.breakpoints_f.tolist()))

    def __call__(self, d):
        return evaluate(self, d)

    @cached_property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """``(widths, slopes)`` with runs of equal slope merged."""
        slopes = self.slopes
        starts = np.flatnonzero(np.r_[True, slopes[1:] != slopes[:-1]])
        edges = np.r_[starts, len(slopes)]
        widths = np.diff(self.breakpoints_d[edges])
        return widths, slopes[starts].copy()

    @cached_property
    def vertices(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints at slope changes only (for plotting/export)."""
        widths, _ = self.segments
        d = np.r_[0.0, np.cumsum(widths)]
        idx = np.searchsorted(self.breakpoints_d, d)
        idx[-1] = len(self.breakpoints_d) - 1
        return self.breakpoints_d[idx], self.breakpoints_f[idx]

    def _check(self, d) -> np.ndarray:
        arr = np.asarray(d, dtype=float)
        tol = 1e-12 * max(1.0, self.capacity)
        if np.any(~np.isfinite(arr)) or np.any(arr < -tol) or np.any(arr > self.capacity + tol):
            raise DomainError(
                f"budget {d!r} kWh outside [0, {self.capacity}] for bus {self.bus_id!r}"
            )
        return np.clip(arr, 0.0, self.capacity)

    def right_derivative(self, d) -> np.ndarray:
        """Vectorised right-derivative, 0 at and beyond capacity."""
        arr = np.asarray(d, dtype=float)
        j = np.searchsorted(self.breakpoints_d, arr, side="right") - 1
        j = np.clip(j, 0, None)
        out = np.where(j < len(self.slopes), self.slopes[np.minimum(j, len(self.slopes) - 1)], 0.0)
        return np.where(arr >= self.capacity, 0.0, out)


def build_utility(values: SectionValues | Sequence[SectionValue], bus_id: str | None = None) -> UtilityFunction:
    """Exact continuous-knapsack utility: fill sections by decreasing ratio (stable on ties)."""
    if not isinstance(values, SectionValues):
        values = list(values)
        if not values:
            raise ValueError("build_utility needs at least one section")
        values = SectionValues(
            bus_id or "",
            np.array([v.energy_cost for v in values]),
            np.array([v.emission_value for v in values]),
        )
    ratio = values.ratio
    order = np.argsort(-ratio, kind="stable")
    cost = values.energy_cost[order]
    value = values.emission_value[order]
    return UtilityFunction(
        bus_id=bus_id if bus_id is not None else values.bus_id,
        breakpoints_d=np.r_[0.0, np.cumsum(cost)],
        breakpoints_f=np.r_[0.0, np.cumsum(value)],
        slopes=ratio[order],
        fill_order=order,
        section_cost=cost,
        section_value=value,
    )


def evaluate(u: UtilityFunction, d):
    """Saved grams ``f(d)`` by interpolation between breakpoints."""
    arr = u._check(d)
    j = np.searchsorted(u.breakpoints_d, arr, side="right") - 1
    j = np.clip(j, 0, len(u.slopes) - 1)
    out = u.breakpoints_f[j] + u.slopes[j] * (arr - u.breakpoints_d[j])
    out = np.where(arr >= u.capacity, u.total_value, out)
    return float(out) if out.ndim == 0 else out


def derivative(u: UtilityFunction, d: float, side: str = "right") -> float:
    """One-sided slope of ``u`` at ``d``.

    The right-derivative at capacity is 0; the left-derivative at 0 is the
    first slope.
    """
    d = float(u._check(d))
    if side == "right":
        return float(u.right_derivative(d))
    if side != "left":
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    j = int(np.searchsorted(u.breakpoints_d, d, side="left")) - 1
    return float(u.slopes[max(j, 0)])


@dataclass(frozen=True, eq=False)
class ModeSchedule:
    """EV fraction ``gamma`` per section, in route order."""

    bus_id: str
    budget: float
    gamma: np.ndarray
    energy_cost: np.ndarray = field(repr=False)
    emission_value: np.ndarray = field(repr=False)

    @property
    def energy_used(self) -> float:
        return float(np.dot(self.energy_cost, self.gamma))

    @property
    def savings(self) -> float:
        return float(np.dot(self.emission_value, self.gamma))

    @property
    def modes(self) -> list[str]:
        return ["EV" if g == 1.0 else "ICE" if g == 0.0 else "SPLIT" for g in self.gamma.tolist()]


def schedule_modes(u: UtilityFunction, budget: float) -> ModeSchedule:
    """Recover the optimal per-section EV fractions for ``budget`` kWh."""
    budget = float(u._check(budget))
    n = len(u.slopes)
    k = int(np.searchsorted(u.breakpoints_d, budget, side="right")) - 1
    gamma_sorted = np.zeros(n)
    gamma_sorted[: min(k, n)] = 1.0
    if k < n:
        gamma_sorted[k] = (budget - u.breakpoints_d[k]) / u.section_cost[k]
    gamma = np.empty(n)
    gamma[u.fill_order] = gamma_sorted
    cost = np.empty(n)
    cost[u.fill_order] = u.section_cost
    value = np.empty(n)
    value[u.fill_order] = u.section_value
    return ModeSchedule(u.bus_id, budget, gamma, cost, value)


def write_utility_csv(u: UtilityFunction, path) -> None:
    d, f = u.vertices
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_kwh", "f_g"])
        writer.writerows((repr(a), repr(b)) for a, b in zip(d.tolist(), f.tolist()))


def write_schedule_csv(schedule: ModeSchedule, path, route: SectionedRoute | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["section", "energy_kwh", "gamma", "mode"]
        if route is not None:
            header[1:1] = ["parent_segment", "length_km", "speed_kmh"]
        writer.writerow(header)
        modes = schedule.modes
        for i in range(len(schedule.gamma)):
            row = [i, repr(float(schedule.energy_cost[i])), repr(float(schedule.gamma[i])), modes[i]]
            if route is not None:
                row[1:1] = [int(route.parent_segment[i]), repr(float(route.lengths[i])), repr(float(route.speeds[i]))]
            writer.writerow(row)


def utilities_for_fleet(
    routes: Iterable[SectionedRoute],
    energy_model: EnergyModel,
    emission_model: EmissionModel,
    objective_mode: str = "per_km_rate",
) -> list[UtilityFunction]:
    return [
        build_utility(section_values(r, energy_model, emission_model, objective_mode))
        for r in routes
    ]
