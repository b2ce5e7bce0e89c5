"""Exact water-filling oracle, consensus ADMM and KKT diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .problem import (
    Allocation,
    AllocationProblem,
    SolverTrace,
    make_allocation,
    oracle_gap,
    project_to_target,
)

__all__ = [
    "AdmmConfig",
    "AllocationProblem",
    "admm_solve",
    "central_solve",
    "kkt_residual",
    "padded_segments",
]


def central_solve(problem: AllocationProblem) -> Allocation:
    """Water-filling on the merged segments of all utilities.

    Segments are filled by decreasing slope. Segments sharing the marginal
    slope split the remaining energy in proportion to their widths.
    """
    n = problem.n
    bus, width, slope = [], [], []
    for i, u in enumerate(problem.utilities):
        w, s = u.segments
        bus.append(np.full(len(w), i))
        width.append(w)
        slope.append(s)
    bus = np.concatenate(bus)
    width = np.concatenate(width)
    slope = np.concatenate(slope)

    target = problem.target
    d = np.zeros(n)
    if target >= problem.capacities.sum():
        d = problem.capacities.copy()
    elif target > 0:
        levels, inverse = np.unique(-slope, return_inverse=True)  # ascending -slope
        level_width = np.bincount(inverse, weights=width, minlength=len(levels))
        filled_before = np.r_[0.0, np.cumsum(level_width)[:-1]]
        marginal = int(np.searchsorted(np.cumsum(level_width), target, side="left"))
        marginal = min(marginal, len(levels) - 1)
        frac = (target - filled_before[marginal]) / level_width[marginal]
        take = np.where(inverse < marginal, width, 0.0) + np.where(inverse == marginal, frac * width, 0.0)
        d = np.bincount(bus, weights=take, minlength=n)
        d = np.minimum(d, problem.capacities)
    return make_allocation(problem, d, "oracle")


def kkt_residual(problem: AllocationProblem, d, rel_tol: float = 1e-9) -> tuple[float, float]:
    """``(consensus_spread, feasibility_gap)`` of an allocation.

    The spread is ``(max - min) / median`` of the right-derivatives over
    buses strictly between 0 and their capacity.
    """
    d = np.asarray(d, dtype=float)
    caps = problem.capacities
    tol = rel_tol * np.maximum(caps, 1.0)
    interior = (d > tol) & (d < caps - tol)
    slopes = np.array(
        [float(u.right_derivative(x)) for u, x, keep in zip(problem.utilities, d, interior) if keep]
    )
    if len(slopes) == 0:
        spread = 0.0
    else:
        med = float(np.median(slopes))
        spread = float(slopes.max() - slopes.min()) / med if med > 0 else float("inf")
    feasibility = abs(float(d.sum()) - problem.target)
    return spread, feasibility


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6
    max_iter: int = 50_000
    bits_per_broadcast: int = 32
    record_every: int = 1

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("ADMM tolerances must be > 0")
        if self.max_iter < 1 or self.record_every < 1:
            raise ValueError("max_iter and record_every must be >= 1")


def padded_segments(problem: AllocationProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merged segments of every utility as ``(N, M)`` arrays: widths, slopes, start offsets."""
    segs = [u.segments for u in problem.utilities]
    m = max(len(w) for w, _ in segs)
    widths = np.zeros((problem.n, m))
    slopes = np.zeros((problem.n, m))
    for i, (w, s) in enumerate(segs):
        widths[i, : len(w)] = w
        slopes[i, : len(s)] = s
    starts = np.cumsum(widths, axis=1) - widths
    return widths, slopes, starts


def prox_allocate(v: np.ndarray, rho: float, widths, slopes, starts) -> np.ndarray:
    """Solve ``max_d f_i(d) - rho/2 (d - v_i)^2`` over ``[0, cap_i]`` for every bus.

    For a concave piecewise-linear ``f`` the maximiser fills each segment up to
    where its slope equals ``rho (d - v)``, which gives a closed form.
    """
    return np.clip(v[:, None] + slopes / rho - starts, 0.0, widths).sum(axis=1)


def admm_solve(problem: AllocationProblem, cfg: AdmmConfig | None = None, oracle: Allocation | None = None) -> SolverTrace:
    """Scaled-form sharing ADMM for ``max sum f_i(d_i)`` s.t. ``sum d_i = e_av``.

    Per iteration each bus solves its proximal subproblem, the aggregator
    averages the proposals and broadcasts one scalar
    ``mean(d) - e_av/N + u``.
    """
    cfg = cfg or AdmmConfig()
    t0 = time.perf_counter()
    n = problem.n
    rho = cfg.rho
    widths, slopes, starts = padded_segments(problem)
    z_bar = problem.target / n
    x = np.zeros(n)
    u = 0.0
    broadcast = x.mean() - z_bar + u
    z_old = x - x.mean() + z_bar

    rec_k, rec_d, rec_gap = [], [], []
    converged = False
    r_norm = s_norm = float("inf")
    k = 0
    for k in range(1, cfg.max_iter + 1):
        v = x - broadcast
        x = prox_allocate(v, rho, widths, slopes, starts)
        x_bar = x.mean()
        u += x_bar - z_bar
        broadcast = x_bar - z_bar + u
        z = x - x_bar + z_bar
        r_norm = np.sqrt(n) * abs(x_bar - z_bar)
        s_norm = rho * float(np.linalg.norm(z - z_old))
        z_old = z
        eps_pri = np.sqrt(n) * cfg.abs_tol + cfg.rel_tol * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = np.sqrt(n) * cfg.abs_tol + cfg.rel_tol * rho * abs(u) * np.sqrt(n)
        if k % cfg.record_every == 0:
            rec_k.append(k)
            rec_d.append(x.copy())
            if oracle is not None:
                rec_gap.append(oracle_gap(project_to_target(problem, x), oracle.d, problem.e_av))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

    if not rec_k or rec_k[-1] != k:
        rec_k.append(k)
        rec_d.append(x.copy())
        if oracle is not None:
            rec_gap.append(oracle_gap(project_to_target(problem, x), oracle.d, problem.e_av))

    final_d = project_to_target(problem, x)
    trace = SolverTrace(
        solver="admm",
        bus_ids=problem.bus_ids,
        e_av=problem.e_av,
        iterations=k,
        history_k=np.array(rec_k, dtype=np.int64),
        history_d=np.array(rec_d),
        history_d_bar=np.array(rec_d),
        history_congested=np.zeros(len(rec_k), dtype=bool),
        history_backed_off=np.zeros((len(rec_k), n), dtype=bool),
        history_events=np.array(rec_k, dtype=np.int64),
        history_gap=np.array(rec_gap) if oracle is not None else None,
        n_broadcasts=k,
        bits_per_broadcast=cfg.bits_per_broadcast,
        converged=converged,
        residuals={"primal": float(r_norm), "dual": float(s_norm), "price": float(rho * u)},
        final=make_allocation(problem, final_d, "admm"),
        raw_final=x.copy(),
        params={"rho": rho, "abs_tol": cfg.abs_tol, "rel_tol": cfg.rel_tol, "max_iter": cfg.max_iter,
                "bits_per_broadcast": cfg.bits_per_broadcast},
    )
    if not converged:
        trace.warnings.append(
            f"ADMM reached max_iter={cfg.max_iter} without meeting tolerances "
            f"(primal {r_norm:.3g}, dual {s_norm:.3g})"
        )
    if problem.surplus > 0:
        trace.warnings.append(f"{problem.surplus:.6g} kWh exceeds total capacity and stays unallocated")
    trace.consensus_spread = kkt_residual(problem, final_d)[0]
    if oracle is not None:
        trace.oracle_gap = oracle_gap(final_d, oracle.d, problem.e_av)
    trace.runtime_s = time.perf_counter() - t0
    return trace


def admm_bits(trace: SolverTrace) -> int:
    """Broadcast bits of an ADMM run: one packet per iteration serves every bus."""
    return trace.n_broadcasts * trace.bits_per_broadcast
