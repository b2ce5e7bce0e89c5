"""Solver registry: one entry point for the oracle, ADMM and AIMD."""

from __future__ import annotations

import time
from dataclasses import fields

from .aimd import AimdConfig, aimd_solve
from .baselines import AdmmConfig, admm_solve, central_solve, kkt_residual
from .exceptions import ConfigError
from .models import parse_number
from .problem import Allocation, AllocationProblem, SolverTrace

SOLVERS = ("oracle", "admm", "aimd")

_INT_KEYS = {"k_max", "seed", "record_every", "max_iter", "bits_per_broadcast"}


def _config_from_dict(cls, block, overrides=None):
    block = dict(block or {})
    block.update({k: v for k, v in (overrides or {}).items() if v is not None})
    names = {f.name for f in fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in block.items():
        if key == "mask" or isinstance(value, bool) or value is None:
            kwargs[key] = value
        elif key in _INT_KEYS:
            kwargs[key] = int(parse_number(value))
        else:
            kwargs[key] = parse_number(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def aimd_config(block=None, **overrides) -> AimdConfig:
    return _config_from_dict(AimdConfig, block, overrides)


def admm_config(block=None, **overrides) -> AdmmConfig:
    return _config_from_dict(AdmmConfig, block, overrides)


def oracle_trace(problem: AllocationProblem) -> SolverTrace:
    t0 = time.perf_counter()
    alloc = central_solve(problem)
    trace = SolverTrace(solver="oracle", bus_ids=problem.bus_ids, e_av=problem.e_av, final=alloc,
                        raw_final=alloc.d.copy(), bits_per_broadcast=0, oracle_gap=0.0)
    trace.consensus_spread = kkt_residual(problem, alloc.d)[0]
    if problem.surplus > 0:
        trace.warnings.append(f"{problem.surplus:.6g} kWh exceeds total capacity and stays unallocated")
    trace.runtime_s = time.perf_counter() - t0
    return trace


def solve(problem: AllocationProblem, name: str, cfg=None, oracle: Allocation | None = None) -> SolverTrace:
    """Run solver ``name`` and return its trace.

    ``cfg`` may be a config object, a dict of config keys or ``None``.
    """
    if name == "oracle":
        return oracle_trace(problem)
    if name == "admm":
        cfg = cfg if isinstance(cfg, AdmmConfig) else admm_config(cfg)
        return admm_solve(problem, cfg, oracle)
    if name == "aimd":
        cfg = cfg if isinstance(cfg, AimdConfig) else aimd_config(cfg)
        return aimd_solve(problem, cfg, oracle)
    raise ConfigError(f"unknown solver {name!r}; expected one of {SOLVERS}")
