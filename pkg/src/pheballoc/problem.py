"""Allocation problem, allocation results and solver traces shared by all solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .utility import UtilityFunction, evaluate


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    """Share ``e_av`` kWh among buses to maximise total CO2 savings."""

    utilities: tuple[UtilityFunction, ...]
    e_av: float

    def __post_init__(self):
        object.__setattr__(self, "utilities", tuple(self.utilities))
        if not self.utilities:
            raise ValueError("an allocation problem needs at least one utility")
        if not np.isfinite(self.e_av) or self.e_av < 0:
            raise ValueError(f"e_av must be >= 0, got {self.e_av}")
        object.__setattr__(self, "e_av", float(self.e_av))

    @property
    def n(self) -> int:
        return len(self.utilities)

    @property
    def bus_ids(self) -> list[str]:
        return [u.bus_id for u in self.utilities]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([u.capacity for u in self.utilities])

    @property
    def target(self) -> float:
        """Energy that can actually be placed: ``min(e_av, sum of capacities)``."""
        return min(self.e_av, float(self.capacities.sum()))

    @property
    def surplus(self) -> float:
        return max(0.0, self.e_av - float(self.capacities.sum()))

    def savings(self, d: Sequence[float]) -> float:
        return float(sum(evaluate(u, x) for u, x in zip(self.utilities, d)))


@dataclass(eq=False)
class Allocation:
    solver: str
    bus_ids: list[str]
    d: np.ndarray
    savings: float
    unallocated: float = 0.0

    def as_dict(self) -> dict:
        return {
            "solver": self.solver,
            "allocation_kwh": dict(zip(self.bus_ids, self.d.tolist())),
            "total_kwh": float(self.d.sum()),
            "savings_g": self.savings,
            "unallocated_kwh": self.unallocated,
        }


def make_allocation(problem: AllocationProblem, d, solver: str) -> Allocation:
    d = np.asarray(d, dtype=float)
    return Allocation(solver, problem.bus_ids, d, problem.savings(d), problem.surplus)


def project_to_target(problem: AllocationProblem, d) -> np.ndarray:
    """Rescale ``d`` so it sums to ``problem.target`` while respecting capacities.

    Mass clipped at a capacity is redistributed proportionally over the
    remaining buses.
    """
    caps = problem.capacities
    d = np.clip(np.asarray(d, dtype=float), 0.0, None)
    target = problem.target
    if d.sum() <= 0:
        d = np.ones_like(d)
    fixed = np.zeros(len(d), dtype=bool)
    out = np.zeros_like(d)
    for _ in range(len(d) + 1):
        free_target = target - caps[fixed].sum()
        free_sum = d[~fixed].sum()
        if free_sum <= 0:
            # remaining mass has no direction; split evenly over free buses
            scaled = np.where(~fixed, free_target / max(1, (~fixed).sum()), 0.0)
        else:
            scaled = np.where(~fixed, d * (free_target / free_sum), 0.0)
        over = (~fixed) & (scaled > caps)
        if not over.any():
            out = np.where(fixed, caps, scaled)
            break
        fixed |= over
    return np.minimum(out, caps)


def oracle_gap(d, d_star, e_av: float) -> float:
    """Largest per-bus deviation from the optimum, relative to ``e_av / N``."""
    d = np.asarray(d, dtype=float)
    if e_av <= 0:
        return float(np.max(np.abs(d - d_star))) if len(d) else 0.0
    return float(np.max(np.abs(d - np.asarray(d_star)))) / (e_av / len(d))


@dataclass(eq=False)
class SolverTrace:
    """Everything a solver run records.

    History arrays are thinned: row ``r`` is the state after iteration
    ``history_k[r]``.
    """

    solver: str
    bus_ids: list[str]
    e_av: float
    iterations: int = 0
    history_k: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    history_d: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    history_d_bar: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    history_congested: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    history_backed_off: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))
    history_events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    history_gap: np.ndarray | None = None
    congestion_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    event_probabilities: np.ndarray | None = None
    event_backoffs: np.ndarray | None = None
    n_broadcasts: int = 0
    bits_per_broadcast: int = 1
    clamp_events: int = 0
    converged: bool = True
    residuals: dict = field(default_factory=dict)
    final: Allocation | None = None
    raw_final: np.ndarray | None = None
    consensus_spread: float = float("nan")
    oracle_gap: float | None = None
    runtime_s: float = 0.0
    warnings: list[str] = field(default_factory=list)
    params: dict = field(default_factory=dict)
    agents: list = field(default_factory=list)

    @property
    def n_congestions(self) -> int:
        return len(self.congestion_iterations)

    def summary(self) -> dict:
        out = {
            "solver": self.solver,
            "iterations": self.iterations,
            "broadcasts": self.n_broadcasts,
            "converged": self.converged,
            "consensus_spread": self.consensus_spread,
            "oracle_gap": self.oracle_gap,
            "clamp_events": self.clamp_events,
            "residuals": self.residuals,
            "warnings": list(self.warnings),
            "params": self.params,
        }
        if self.final is not None:
            out["final"] = self.final.as_dict()
        return out
