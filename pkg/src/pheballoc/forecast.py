"""Forecast ingestion, NMAE statistics and forecast-error injection.

The available energy ``e_av`` is a day-ahead forecast. This module scores
forecasts against measurements and replays an allocation against random
"actual" values to account for energy bought from the grid (shortfall) or
left unused (surplus).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .problem import Allocation, AllocationProblem

UNCERTAINTY_KINDS = ("multiplicative", "additive")
DISTRIBUTIONS = ("uniform", "normal")


@dataclass(frozen=True, eq=False)
class ForecastSeries:
    """Daily predicted and measured energy in kWh.

    ``capacity_norm`` is the NMAE normalisation base, normally the installed
    generation capacity.
    """

    days: tuple[str, ...]
    predicted: np.ndarray
    actual: np.ndarray
    capacity_norm: float

    def __post_init__(self):
        pred = np.asarray(self.predicted, dtype=float)
        act = np.asarray(self.actual, dtype=float)
        object.__setattr__(self, "days", tuple(str(d) for d in self.days))
        if pred.shape != act.shape or pred.ndim != 1 or len(pred) != len(self.days):
            raise ConfigError("days, predicted and actual must have the same length")
        if len(pred) == 0:
            raise ConfigError("forecast series is empty")
        if np.any(~np.isfinite(pred)) or np.any(~np.isfinite(act)) or np.any(pred < 0) or np.any(act < 0):
            raise ConfigError("predicted and actual energy must be finite and >= 0")
        if not (math.isfinite(self.capacity_norm) and self.capacity_norm > 0):
            raise ConfigError(f"capacity_norm must be > 0, got {self.capacity_norm}")
        object.__setattr__(self, "predicted", pred)
        object.__setattr__(self, "actual", act)
        object.__setattr__(self, "capacity_norm", float(self.capacity_norm))

    def __len__(self) -> int:
        return len(self.predicted)


def load_forecast_csv(path, capacity_norm: float | None = None) -> ForecastSeries:
    """Read a ``day,predicted_kwh,actual_kwh`` CSV.

    The normalisation base is, in order: the ``capacity_norm`` argument, an
    optional ``capacity_kwh`` column (installed capacity, must be constant),
    or the largest measured value.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read forecast file {path}: {exc}") from exc
    days, pred, act, caps = [], [], [], []
    with fh:
        reader = csv.DictReader(fh)
        missing = {"day", "predicted_kwh", "actual_kwh"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                pred.append(float(row["predicted_kwh"]))
                act.append(float(row["actual_kwh"]))
            except (TypeError, ValueError):
                raise ConfigError(f"{path}:{line}: predicted_kwh and actual_kwh must be numbers") from None
            days.append(row["day"])
            if row.get("capacity_kwh") not in (None, ""):
                caps.append(float(row["capacity_kwh"]))
    if not days:
        raise ConfigError(f"{path}: no records")
    if capacity_norm is None and caps:
        if len(set(caps)) != 1 or len(caps) != len(days):
            raise ConfigError(f"{path}: capacity_kwh must be given once per row and be constant")
        capacity_norm = caps[0]
    if capacity_norm is None:
        capacity_norm = max(act)
    return ForecastSeries(tuple(days), np.array(pred), np.array(act), capacity_norm)


def write_forecast_csv(series: ForecastSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "predicted_kwh", "actual_kwh", "capacity_kwh"])
        for day, p, a in zip(series.days, series.predicted.tolist(), series.actual.tolist()):
            writer.writerow([day, repr(p), repr(a), repr(series.capacity_norm)])


@dataclass(frozen=True, eq=False)
class NmaeReport:
    per_record: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    max: float
    threshold: float
    fraction_within: float

    def fraction_below(self, threshold: float) -> float:
        return float(np.mean(self.per_record <= threshold))

    def as_dict(self) -> dict:
        return {
            "n_records": int(len(self.per_record)),
            "max_nmae_pct": self.max,
            "mean_nmae_pct": float(self.per_record.mean()),
            "threshold_pct": self.threshold,
            "fraction_within_threshold": self.fraction_within,
            "histogram": {"bin_edges_pct": self.bin_edges.tolist(), "counts": self.counts.tolist()},
            "per_record_pct": self.per_record.tolist(),
        }


def nmae(series: ForecastSeries, threshold: float = 3.0, bin_width: float = 1.0) -> NmaeReport:
    """Per-record NMAE ``|predicted - actual| / capacity_norm * 100`` and its summary."""
    if bin_width <= 0:
        raise ConfigError(f"bin_width must be > 0, got {bin_width}")
    per = np.abs(series.predicted - series.actual) / series.capacity_norm * 100.0
    top = max(bin_width, math.ceil(per.max() / bin_width) * bin_width)
    if top <= per.max():
        top += bin_width
    edges = np.arange(0.0, top + bin_width / 2, bin_width)
    counts, _ = np.histogram(per, bins=edges)
    return NmaeReport(
        per_record=per,
        bin_edges=edges,
        counts=counts,
        max=float(per.max()),
        threshold=float(threshold),
        fraction_within=float(np.mean(per <= threshold)),
    )


def synthetic_series(
    n_days: int = 100,
    frac_within: float = 0.8,
    threshold: float = 3.0,
    max_error: float = 7.0,
    capacity_norm: float = 100.0,
    seed: int = 0,
) -> ForecastSeries:
    """Synthetic PV-like series with a prescribed NMAE profile.

    ``round(frac_within * n_days)`` records have NMAE in ``[0, 0.95 threshold]``,
    the others in ``[1.05 threshold, max_error]`` and one record sits exactly
    at ``max_error``. Days are shuffled.
    """
    if not 0 <= frac_within <= 1 or not 0 < threshold < max_error:
        raise ConfigError("need 0 <= frac_within <= 1 and 0 < threshold < max_error")
    rng = np.random.default_rng(seed)
    n_in = round(frac_within * n_days)
    n_out = n_days - n_in
    err = np.concatenate([
        rng.uniform(0.0, 0.95 * threshold, n_in),
        rng.uniform(1.05 * threshold, max_error, n_out),
    ])
    if n_out:
        err[-1] = max_error
    err = rng.permutation(err)
    # measured generation between 20% and 90% of capacity
    actual = np.round(rng.uniform(0.2, 0.9, n_days) * capacity_norm, 3)
    sign = rng.choice([-1.0, 1.0], n_days)
    predicted = actual + sign * err / 100.0 * capacity_norm
    return ForecastSeries(tuple(f"d{i + 1:03d}" for i in range(n_days)), predicted, actual, capacity_norm)


@dataclass(frozen=True)
class UncertaintyModel:
    """Random error applied to the forecast ``e_av``.

    ``multiplicative``: ``actual = predicted * (1 + x)``; ``additive``:
    ``actual = predicted + x``, with ``x ~ uniform(lo, hi)`` or
    ``normal(mu, sigma)``. Draws producing a negative actual are rejected,
    i.e. the distribution is truncated at ``actual >= 0``. Trial ``t`` uses
    ``np.random.default_rng([seed, t])``.
    """

    kind: str = "multiplicative"
    distribution: str = "normal"
    params: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in UNCERTAINTY_KINDS:
            raise ConfigError(f"uncertainty kind must be one of {UNCERTAINTY_KINDS}, got {self.kind!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        a, b = (float(v) for v in self.params)
        object.__setattr__(self, "params", (a, b))
        if self.distribution == "uniform" and a > b:
            raise ConfigError(f"uniform bounds need lo <= hi, got ({a}, {b})")
        if self.distribution == "normal" and b < 0:
            raise ConfigError(f"normal sigma must be >= 0, got {b}")

    @classmethod
    def from_config(cls, block) -> "UncertaintyModel":
        block = dict(block)
        dist = block.pop("distribution", "normal")
        if dist == "uniform":
            params = (block.pop("lo"), block.pop("hi"))
        else:
            params = (block.pop("mu", 0.0), block.pop("sigma"))
        model = cls(block.pop("kind", "multiplicative"), dist, params, int(block.pop("seed", 0)))
        if block:
            raise ConfigError(f"unknown uncertainty keys: {sorted(block)}")
        return model

    def _error(self, rng) -> float:
        a, b = self.params
        return float(rng.uniform(a, b)) if self.distribution == "uniform" else float(rng.normal(a, b))

    def draw(self, predicted: float, trial: int, max_tries: int = 10_000) -> float:
        rng = np.random.default_rng([self.seed, trial])
        for _ in range(max_tries):
            x = self._error(rng)
            actual = predicted * (1.0 + x) if self.kind == "multiplicative" else predicted + x
            if actual >= 0:
                return actual
        raise ConfigError(f"uncertainty model {self} almost never yields a non-negative actual")


@dataclass(eq=False)
class UncertaintyReport:
    allocation: Allocation
    predicted: float
    actual: np.ndarray
    shortfall: np.ndarray
    surplus: np.ndarray
    renewable_used: np.ndarray
    model: UncertaintyModel = field(repr=False)

    def as_dict(self) -> dict:
        def stats(x):
            return {"mean": float(x.mean()), "std": float(x.std()), "min": float(x.min()), "max": float(x.max())}

        return {
            "trials": int(len(self.actual)),
            "predicted_kwh": self.predicted,
            "allocated_kwh": float(self.allocation.d.sum()),
            "model": {"kind": self.model.kind, "distribution": self.model.distribution,
                      "params": list(self.model.params), "seed": self.model.seed},
            "actual_kwh": stats(self.actual),
            "shortfall_kwh": stats(self.shortfall),
            "surplus_kwh": stats(self.surplus),
        }


def run_with_uncertainty(
    problem: AllocationProblem,
    model: UncertaintyModel,
    trials: int = 1000,
    solver: str = "oracle",
    solver_cfg=None,
) -> UncertaintyReport:
    """Allocate against the forecast once, then score it against ``trials`` random actuals.

    Shortfall is energy the buses expect but the renewables do not deliver
    (bought from the grid); surplus is renewable energy left unallocated.
    """
    from .solvers import solve

    if trials < 1:
        raise ConfigError("trials must be >= 1")
    allocation = solve(problem, solver, solver_cfg).final
    allocated = float(allocation.d.sum())
    actual = np.array([model.draw(problem.e_av, t) for t in range(trials)])
    shortfall = np.maximum(0.0, allocated - actual)
    surplus = np.maximum(0.0, actual - allocated)
    return UncertaintyReport(allocation, problem.e_av, actual, shortfall, surplus, allocated - shortfall, model)
