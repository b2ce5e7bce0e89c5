"""End-to-end scenario runner: config -> fleet -> utilities -> solvers -> files."""

from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .aimd import BIT_CONVENTIONS, bits_at_gap, comms_bits
from .baselines import admm_bits, kkt_residual
from .exceptions import ConfigError
from .forecast import UncertaintyModel, load_forecast_csv, run_with_uncertainty
from .models import EmissionModel, EnergyModel, parse_number
from .problem import AllocationProblem, SolverTrace
from .routes import discretize, load_fleet
from .solvers import SOLVERS, admm_config, aimd_config, solve
from .utility import OBJECTIVE_MODES, evaluate, schedule_modes, utilities_for_fleet, write_schedule_csv

MATCHED_GAP = 0.02

_KNOWN_KEYS = {
    "fleet", "energy_model", "emission_model", "objective_mode", "e_av", "forecast", "solver",
    "aimd", "admm", "output_dir", "seed", "wall_clock_budget_s", "uncertainty", "schedule_solver",
    "matched_gap", "description",
}


@dataclass
class ScenarioConfig:
    fleet: Path
    energy_model: EnergyModel
    emission_model: EmissionModel
    e_av: float
    objective_mode: str = "per_km_rate"
    solvers: tuple[str, ...] = ("oracle",)
    aimd: dict = field(default_factory=dict)
    admm: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int | None = None
    wall_clock_budget_s: float | None = None
    uncertainty: dict | None = None
    schedule_solver: str | None = None
    matched_gap: float = MATCHED_GAP
    forecast: dict | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        base = Path(base_dir)
        if "fleet" not in data:
            raise ConfigError("scenario config needs a 'fleet' route file")
        fleet = base / data["fleet"]
        if not fleet.is_file():
            raise ConfigError(f"fleet file not found: {fleet}")
        if ("e_av" in data) == ("forecast" in data):
            raise ConfigError("give exactly one of 'e_av' or 'forecast'")
        forecast = None
        if "e_av" in data:
            e_av = parse_number(data["e_av"])
        else:
            forecast = dict(data["forecast"])
            path = base / forecast.get("file", "")
            if not path.is_file():
                raise ConfigError(f"forecast file not found: {path}")
            series = load_forecast_csv(path)
            day = str(forecast.get("day", series.days[0]))
            if day not in series.days:
                raise ConfigError(f"day {day!r} not in forecast file {path}")
            e_av = float(series.predicted[series.days.index(day)])
            forecast = {"file": str(path), "day": day}
        if e_av < 0:
            raise ConfigError(f"e_av must be >= 0, got {e_av}")
        mode = data.get("objective_mode", "per_km_rate")
        if mode not in OBJECTIVE_MODES:
            raise ConfigError(f"objective_mode must be one of {OBJECTIVE_MODES}, got {mode!r}")
        solver = data.get("solver", "oracle")
        solvers = SOLVERS if solver == "all" else tuple(solver) if isinstance(solver, list) else (solver,)
        for name in solvers:
            if name not in SOLVERS:
                raise ConfigError(f"unknown solver {name!r}; expected one of {SOLVERS} or 'all'")
        budget = data.get("wall_clock_budget_s")
        return cls(
            fleet=fleet,
            energy_model=EnergyModel.from_config(data.get("energy_model")),
            emission_model=EmissionModel.from_config(data.get("emission_model")),
            e_av=e_av,
            objective_mode=mode,
            solvers=tuple(solvers),
            aimd=dict(data.get("aimd") or {}),
            admm=dict(data.get("admm") or {}),
            output_dir=base / data.get("output_dir", "out"),
            seed=None if data.get("seed") is None else int(data["seed"]),
            wall_clock_budget_s=None if budget is None else float(budget),
            uncertainty=data.get("uncertainty"),
            schedule_solver=data.get("schedule_solver"),
            matched_gap=float(data.get("matched_gap", MATCHED_GAP)),
            forecast=forecast,
        )

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(data, base_dir=path.parent)


@dataclass(eq=False)
class ScenarioReport:
    config: ScenarioConfig
    problem: AllocationProblem
    routes: list
    traces: dict[str, SolverTrace]
    oracle_d: np.ndarray
    uncertainty: dict | None = None

    def savings(self, solver: str) -> float:
        """Savings recomputed from the utilities, not taken from the solver."""
        d = self.traces[solver].final.d
        return float(sum(evaluate(u, x) for u, x in zip(self.problem.utilities, d)))

    def solver_summary(self, solver: str) -> dict:
        trace = self.traces[solver]
        spread, feas = kkt_residual(self.problem, trace.final.d)
        out = {
            "iterations": trace.iterations,
            "converged": trace.converged,
            "runtime_s": trace.runtime_s,
            "savings_g": self.savings(solver),
            "allocation_kwh": dict(zip(self.problem.bus_ids, trace.final.d.tolist())),
            "oracle_gap": trace.oracle_gap,
            "kkt": {"consensus_spread": spread, "feasibility_gap": feas},
            "bits": solver_bits(trace),
            "warnings": list(trace.warnings),
            "params": trace.params,
        }
        budget = self.config.wall_clock_budget_s
        out["over_wall_clock_budget"] = budget is not None and trace.runtime_s > budget
        if trace.solver == "admm":
            out["residuals"] = trace.residuals
        if trace.solver == "aimd":
            out["congestion_events"] = trace.n_congestions
            out["clamp_events"] = trace.clamp_events
        return out

    def to_dict(self) -> dict:
        p = self.problem
        out = {
            "problem": {
                "n_buses": p.n,
                "e_av_kwh": p.e_av,
                "target_kwh": p.target,
                "unallocated_kwh": p.surplus,
                "objective_mode": self.config.objective_mode,
                "full_ev_requirement_kwh": dict(zip(p.bus_ids, p.capacities.tolist())),
                "oracle_allocation_kwh": dict(zip(p.bus_ids, self.oracle_d.tolist())),
            },
            "solvers": {name: self.solver_summary(name) for name in self.traces},
        }
        if self.config.forecast:
            out["problem"]["forecast"] = self.config.forecast
        if len(self.traces) >= 2:
            out["comparison"] = compare(self)
        if self.uncertainty is not None:
            out["uncertainty"] = self.uncertainty
        return out


def solver_bits(trace: SolverTrace) -> dict:
    if trace.solver == "aimd":
        return {conv: comms_bits(trace, conv)[0] for conv in BIT_CONVENTIONS}
    if trace.solver == "admm":
        return {"broadcast": admm_bits(trace)}
    return {}


def _bits_at_gap(trace: SolverTrace, gap: float) -> dict:
    if trace.solver == "oracle":
        return {conv: 0 for conv in BIT_CONVENTIONS}
    if trace.history_gap is None:
        return {conv: None for conv in BIT_CONVENTIONS}
    return {conv: bits_at_gap(trace, gap, conv) for conv in BIT_CONVENTIONS}


def compare(report: ScenarioReport, gap: float | None = None) -> dict:
    """Comparison table of the solvers in ``report``.

    Rows hold iterations, total bits, oracle gap (%) and runtime. ``ordering``
    tells, per bit convention, whether AIMD needed fewer feedback bits than
    ADMM to settle within the matched oracle gap.
    """
    gap = report.config.matched_gap if gap is None else gap
    if len(report.traces) < 2:
        raise ConfigError("compare needs a report with at least two solvers")
    ref = report.problem
    rows = []
    for name, trace in report.traces.items():
        if list(trace.bus_ids) != ref.bus_ids or trace.e_av != ref.e_av:
            raise ConfigError(f"solver {name!r} solved a different problem than the report")
        bits = solver_bits(trace)
        rows.append({
            "solver": name,
            "iterations": trace.iterations,
            "bits": bits.get("per_broadcast", bits.get("broadcast", 0)),
            "oracle_gap_pct": 100.0 * (trace.oracle_gap or 0.0),
            "runtime_s": trace.runtime_s,
            "bits_at_matched_gap": _bits_at_gap(trace, gap),
        })
    out: dict[str, Any] = {"matched_gap": gap, "rows": rows}
    if "aimd" in report.traces and "admm" in report.traces:
        a = _bits_at_gap(report.traces["aimd"], gap)
        b = _bits_at_gap(report.traces["admm"], gap)
        out["ordering"] = {
            conv: (a[conv] is not None and b[conv] is not None and a[conv] < b[conv])
            for conv in BIT_CONVENTIONS
        }
    return out


def format_table(table: dict) -> str:
    lines = [f"{'solver':<8}{'iterations':>12}{'bits':>12}{'gap %':>10}{'runtime s':>12}"]
    for r in table["rows"]:
        lines.append(
            f"{r['solver']:<8}{r['iterations']:>12}{r['bits']:>12}{r['oracle_gap_pct']:>10.3f}{r['runtime_s']:>12.2f}"
        )
    return "\n".join(lines)


def build_problem(cfg: ScenarioConfig):
    routes = load_fleet(cfg.fleet, cfg.energy_model.valid_range)
    sectioned = [discretize(r) for r in routes]
    utilities = utilities_for_fleet(sectioned, cfg.energy_model, cfg.emission_model, cfg.objective_mode)
    return AllocationProblem(tuple(utilities), cfg.e_av), sectioned


def execute(cfg: ScenarioConfig) -> ScenarioReport:
    """Solve the configured scenario without touching the disk."""
    problem, sectioned = build_problem(cfg)
    oracle = solve(problem, "oracle")
    traces = {}
    for name in cfg.solvers:
        if name == "oracle":
            traces[name] = oracle
        elif name == "aimd":
            block = dict(cfg.aimd)
            if cfg.seed is not None:
                block["seed"] = cfg.seed
            traces[name] = solve(problem, "aimd", aimd_config(block), oracle.final)
        else:
            traces[name] = solve(problem, "admm", admm_config(cfg.admm), oracle.final)
    uncertainty = None
    if cfg.uncertainty:
        block = dict(cfg.uncertainty)
        trials = int(block.pop("trials", 1000))
        solver = block.pop("solver", "oracle")
        model = UncertaintyModel.from_config(block)
        solver_cfg = cfg.aimd if solver == "aimd" else cfg.admm if solver == "admm" else None
        uncertainty = run_with_uncertainty(problem, model, trials, solver, solver_cfg).as_dict()
    return ScenarioReport(cfg, problem, sectioned, traces, oracle.final.d.copy(), uncertainty)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_allocation_csv(report: ScenarioReport, path) -> None:
    names = list(report.traces)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bus_id", "full_ev_kwh", *[f"{n}_kwh" for n in names], *[f"{n}_savings_g" for n in names]])
        for i, (bus, u) in enumerate(zip(report.problem.bus_ids, report.problem.utilities)):
            ds = [report.traces[n].final.d[i] for n in names]
            writer.writerow([bus, _fmt(u.capacity), *map(_fmt, ds), *(_fmt(evaluate(u, x)) for x in ds)])


def write_trace_csv(trace: SolverTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "bus_id", "d", "d_bar", "congested", "backed_off"])
        if trace.solver == "oracle":
            for bus, x in zip(trace.bus_ids, trace.final.d.tolist()):
                writer.writerow([0, bus, _fmt(x), _fmt(x), 0, 0])
            return
        for r, k in enumerate(trace.history_k.tolist()):
            cong = int(trace.history_congested[r])
            for i, bus in enumerate(trace.bus_ids):
                writer.writerow([
                    k, bus, _fmt(trace.history_d[r, i]), _fmt(trace.history_d_bar[r, i]),
                    cong, int(trace.history_backed_off[r, i]),
                ])


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_outputs(report: ScenarioReport, out_dir) -> list[Path]:
    """Write every output into a scratch directory, then move the files in place.

    On failure the scratch directory is removed and ``out_dir`` is untouched.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        write_allocation_csv(report, tmp / "allocation.csv")
        for name, trace in report.traces.items():
            write_trace_csv(trace, tmp / f"trace_{name}.csv")
        sched = report.config.schedule_solver or ("oracle" if "oracle" in report.traces else next(iter(report.traces)))
        if sched not in report.traces:
            raise ConfigError(f"schedule_solver {sched!r} was not run")
        d = report.traces[sched].final.d
        for u, route, x in zip(report.problem.utilities, report.routes, d):
            write_schedule_csv(schedule_modes(u, float(x)), tmp / f"schedule_{u.bus_id}.csv", route)
        payload = report.to_dict()
        payload["schedule_solver"] = sched
        (tmp / "report.json").write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
        written = []
        for src in sorted(tmp.iterdir()):
            dst = out_dir / src.name
            os.replace(src, dst)
            written.append(dst)
        return written
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def run(config_path, out_dir=None, solver: str | None = None, seed: int | None = None) -> ScenarioReport:
    """Load ``config_path``, solve and write ``allocation.csv``, traces, schedules and ``report.json``."""
    cfg = ScenarioConfig.load(config_path)
    if solver is not None:
        if solver != "all" and solver not in SOLVERS:
            raise ConfigError(f"unknown solver {solver!r}; expected one of {SOLVERS} or 'all'")
        cfg.solvers = SOLVERS if solver == "all" else (solver,)
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.output_dir = Path(out_dir)
    report = execute(cfg)
    write_outputs(report, cfg.output_dir)
    return report


def savings_sweep(problem: AllocationProblem, e_avs) -> list[float]:
    """Oracle savings (g) for each available-energy level."""
    return [solve(AllocationProblem(problem.utilities, e), "oracle").final.savings for e in e_avs]
