"""Unsynchronised stochastic AIMD allocation with one-bit congestion feedback.

Every bus grows its budget by ``alpha`` per step. When the aggregator sees
the total exceed the available energy it broadcasts a single congestion bit and
each bus independently shrinks its budget by ``beta`` with probability
``gamma / (d_bar * g(f'(d_bar)))``, where ``d_bar`` is the bus's average
budget at congestion events and ``g`` an optional private mask. The long-run
averages ``d_bar`` reach consensus on the marginal utilities, i.e. the optimum.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import kkt_residual, padded_segments
from .exceptions import ConfigError
from .problem import (
    Allocation,
    AllocationProblem,
    SolverTrace,
    make_allocation,
    oracle_gap,
    project_to_target,
)
from .utility import UtilityFunction

BIT_CONVENTIONS = ("per_broadcast", "per_bus")


@dataclass(frozen=True)
class Mask:
    """Strictly increasing transform applied to the derivative inside the backoff law."""

    kind: str = "identity"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "affine", "power"):
            raise ConfigError(f"unknown mask {self.kind!r}")
        if self.kind == "affine" and (self.a <= 0 or self.b < 0):
            raise ConfigError("affine mask needs a > 0 and b >= 0 to stay increasing and positive")
        if self.kind == "power" and self.a <= 0:
            raise ConfigError("power mask needs a positive exponent")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "affine":
            return self.a * x + self.b
        if self.kind == "power":
            return np.power(x, self.a)
        return x

    @classmethod
    def parse(cls, spec) -> "Mask":
        """Parse ``identity``, ``affine(a,b)`` or ``power(p)``."""
        if isinstance(spec, Mask):
            return spec
        if spec is None:
            return cls()
        text = str(spec).replace(" ", "")
        if text == "identity":
            return cls()
        m = re.fullmatch(r"(affine|power)\(([^)]*)\)", text)
        if not m:
            raise ConfigError(f"cannot parse mask {spec!r}")
        try:
            args = [float(v) for v in m.group(2).split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"cannot parse mask {spec!r}") from exc
        if m.group(1) == "affine" and len(args) == 2:
            return cls("affine", args[0], args[1])
        if m.group(1) == "power" and len(args) == 1:
            return cls("power", args[0])
        raise ConfigError(f"wrong number of mask parameters in {spec!r}")

    def __str__(self) -> str:
        if self.kind == "affine":
            return f"affine({self.a:g},{self.b:g})"
        if self.kind == "power":
            return f"power({self.a:g})"
        return "identity"


@dataclass(frozen=True)
class AimdConfig:
    """AIMD parameters.

    ``alpha`` (kWh per step) defaults to ``e_av / (N * 400)`` and
    ``gamma_gain`` to ``0.5 * min_i(last slope of f_i) * e_av / N`` when left
    as ``None``.
    """

    alpha: float | None = None
    beta: float = 0.5
    gamma_gain: float | None = None
    k_max: int = 200_000
    seed: int = 0
    mask: Mask = field(default_factory=Mask)
    record_every: int = 100
    record_events: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mask", Mask.parse(self.mask))
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        if self.gamma_gain is not None and not self.gamma_gain > 0:
            raise ConfigError(f"gamma_gain must be > 0, got {self.gamma_gain}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


def default_alpha(problem: AllocationProblem) -> float:
    scale = problem.e_av if problem.e_av > 0 else float(problem.capacities.sum())
    return scale / (problem.n * 400.0)


def default_gamma(problem: AllocationProblem) -> float:
    last_slopes = [float(u.slopes[-1]) for u in problem.utilities]
    return 0.5 * min(last_slopes) * (problem.e_av / problem.n)


def suggest_gamma(problem: AllocationProblem, fraction: float = 0.7) -> float:
    """Gain that puts the smallest interior bus at ``p = fraction`` at the optimum.

    Uses the oracle, so it is a tuning aid for simulations rather than part
    of the distributed protocol. At the optimum every interior bus sees the
    same slope ``lam``; ``p_i = gamma / (d_i * lam)`` is largest for the
    smallest budget, which therefore decides how large ``gamma`` may be
    before backoffs start to clamp.
    """
    from .baselines import central_solve

    d = central_solve(problem).d
    caps = problem.capacities
    interior = (d > 1e-9 * np.maximum(caps, 1.0)) & (d < caps * (1 - 1e-9))
    if not interior.any():
        return default_gamma(problem)
    lam = float(np.median([problem.utilities[i].right_derivative(d[i]) for i in np.flatnonzero(interior)]))
    return fraction * lam * float(d[interior].min())


@dataclass
class AgentState:
    """Budget of one bus and the running mean of its budget at congestion events."""

    d: float = 0.0
    d_bar: float = 0.0
    n_congestions: int = 0

    def record_congestion(self) -> None:
        self.n_congestions += 1
        self.d_bar += (self.d - self.d_bar) / self.n_congestions


def _probabilities(d_bar, fprime, gamma_gain, mask: Mask):
    """Clamped backoff probabilities and a flag telling where clamping applied."""
    d_bar = np.asarray(d_bar, dtype=float)
    denom = d_bar * mask(fprime)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(denom > 0, gamma_gain / np.where(denom > 0, denom, 1.0), np.inf)
    clamped = raw > 1.0
    return np.clip(raw, 0.0, 1.0), clamped


def backoff_probability(agent: AgentState, u: UtilityFunction, gamma_gain: float, mask=None) -> float:
    """Probability that ``agent`` backs off at a congestion event.

    ``p = clamp(gamma / (d_bar * mask(f'(d_bar))), 0, 1)`` with the right
    derivative. ``d_bar = 0`` or a zero derivative give ``p = 1``. If the
    agent has not seen a congestion yet its current budget stands in for
    ``d_bar``.
    """
    mask = Mask.parse(mask)
    d_bar = agent.d_bar if agent.n_congestions else agent.d
    fprime = float(u.right_derivative(min(d_bar, u.capacity)))
    p, _ = _probabilities(d_bar, fprime, gamma_gain, mask)
    return float(p)


class _AgentStreams:
    """Independent per-bus uniform streams seeded by ``(seed, bus index)``."""

    def __init__(self, seed: int, n: int, block: int = 4096):
        self._rngs = [np.random.default_rng([seed, i]) for i in range(n)]
        self._block = block
        self._buf = np.empty((n, 0))
        self._pos = 0

    def draw(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([rng.random(self._block) for rng in self._rngs])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


def _right_derivatives(d, ends, slopes, n_segments):
    j = (ends <= d[:, None]).sum(axis=1)
    rows = np.arange(len(d))
    return np.where(j < n_segments, slopes[rows, np.minimum(j, slopes.shape[1] - 1)], 0.0)


def aimd_solve(problem: AllocationProblem, cfg: AimdConfig | None = None, oracle: Allocation | None = None) -> SolverTrace:
    """Run the AIMD allocator for ``cfg.k_max`` iterations.

    Runs of non-congested steps are advanced in one jump (``d + m * alpha``).
    The reported allocation is the congestion-time average ``d_bar``
    projected onto ``sum d = min(e_av, sum capacities)``.
    """
    cfg = cfg or AimdConfig()
    t0 = time.perf_counter()
    n = problem.n
    e_av = problem.e_av
    caps = problem.capacities
    alpha = cfg.alpha if cfg.alpha is not None else default_alpha(problem)
    gamma = cfg.gamma_gain if cfg.gamma_gain is not None else default_gamma(problem)
    beta = cfg.beta
    mask = cfg.mask
    R = cfg.record_every

    widths, slopes, starts = padded_segments(problem)
    ends = starts + widths
    n_segments = np.array([len(u.segments[0]) for u in problem.utilities])
    streams = _AgentStreams(cfg.seed, n)

    d = np.zeros(n)
    d_bar = np.zeros(n)
    n_cong = 0
    clamp_events = 0
    any_unclamped = False

    rec_k, rec_d, rec_dbar, rec_cong, rec_back, rec_events, rec_gap = [], [], [], [], [], [], []
    cong_k: list[int] = []
    ev_p: list[np.ndarray] = []
    ev_back: list[np.ndarray] = []
    no_backoff = np.zeros(n, dtype=bool)

    def current_estimate():
        return d_bar if n_cong else d

    def gap_now():
        return oracle_gap(project_to_target(problem, current_estimate()), oracle.d, e_av)

    k = 1
    while k < cfg.k_max:
        total = d.sum()
        if total < e_av:
            m = max(1, math.ceil((e_av - total) / (n * alpha)))
            while m > 1 and (d + (m - 1) * alpha).sum() >= e_av:
                m -= 1
            while (d + m * alpha).sum() < e_av:
                m += 1
            m = min(m, cfg.k_max - k)
            first = k + (-k) % R
            if first < k + m:
                ks = np.arange(first, k + m, R)
                gap = gap_now() if oracle is not None else None
                for kk in ks:
                    rec_k.append(int(kk))
                    rec_d.append(d + (kk - k) * alpha)
                    rec_dbar.append(current_estimate().copy())
                    rec_cong.append(False)
                    rec_back.append(no_backoff)
                    rec_events.append(n_cong)
                    if oracle is not None:
                        rec_gap.append(gap)
            d = d + m * alpha
            k += m
            continue

        # congestion event: every agent folds its current budget into d_bar
        n_cong += 1
        d_bar += (d - d_bar) / n_cong
        cong_k.append(k)
        fprime = _right_derivatives(d_bar, ends, slopes, n_segments)
        p, clamped = _probabilities(d_bar, fprime, gamma, mask)
        clamp_events += int(clamped.sum())
        any_unclamped = any_unclamped or not clamped.all()
        back = streams.draw() < p
        if cfg.record_events:
            ev_p.append(p)
            ev_back.append(back)
        if k % R == 0:
            rec_k.append(k)
            rec_d.append(d.copy())
            rec_dbar.append(d_bar.copy())
            rec_cong.append(True)
            rec_back.append(back)
            rec_events.append(n_cong)
            if oracle is not None:
                rec_gap.append(gap_now())
        d = np.where(back, beta * d, d + alpha)
        k += 1

    rec_k.append(k)
    rec_d.append(d.copy())
    rec_dbar.append(current_estimate().copy())
    rec_cong.append(False)
    rec_back.append(no_backoff)
    rec_events.append(n_cong)
    if oracle is not None:
        rec_gap.append(gap_now())

    estimate = current_estimate()
    final_d = project_to_target(problem, estimate)
    trace = SolverTrace(
        solver="aimd",
        bus_ids=problem.bus_ids,
        e_av=e_av,
        iterations=k,
        history_k=np.array(rec_k, dtype=np.int64),
        history_d=np.array(rec_d),
        history_d_bar=np.array(rec_dbar),
        history_congested=np.array(rec_cong, dtype=bool),
        history_backed_off=np.array(rec_back, dtype=bool),
        history_events=np.array(rec_events, dtype=np.int64),
        history_gap=np.array(rec_gap) if oracle is not None else None,
        congestion_iterations=np.array(cong_k, dtype=np.int64),
        event_probabilities=np.array(ev_p).reshape(-1, n) if cfg.record_events else None,
        event_backoffs=np.array(ev_back, dtype=bool).reshape(-1, n) if cfg.record_events else None,
        n_broadcasts=n_cong,
        bits_per_broadcast=1,
        clamp_events=clamp_events,
        converged=n_cong > 0,
        final=make_allocation(problem, final_d, "aimd"),
        raw_final=estimate.copy(),
        params={
            "alpha": alpha,
            "beta": beta,
            "gamma_gain": gamma,
            "k_max": cfg.k_max,
            "seed": cfg.seed,
            "mask": str(mask),
        },
    )
    trace.agents = [AgentState(float(a), float(b), n_cong) for a, b in zip(d, d_bar)]
    if n_cong == 0:
        trace.warnings.append("no congestion event occurred; d_bar is undefined and current budgets are reported")
    elif not any_unclamped:
        trace.warnings.append(
            "every backoff probability was clamped to 1: the run degenerated to synchronised backoff"
        )
    if problem.surplus > 0:
        trace.warnings.append(
            f"{problem.surplus:.6g} kWh exceeds total capacity ({caps.sum():.6g} kWh) and stays unallocated"
        )
    trace.consensus_spread = kkt_residual(problem, final_d)[0]
    if oracle is not None:
        trace.oracle_gap = oracle_gap(final_d, oracle.d, e_av)
    trace.runtime_s = time.perf_counter() - t0
    return trace


def comms_bits(
    trace: SolverTrace,
    convention: str = "per_broadcast",
    count_reports: bool = False,
    report_bits: int = 32,
    upto_k: int | None = None,
) -> tuple[int, dict]:
    """Feedback bits of an AIMD run.

    One bit per congestion event (``per_broadcast``) or one per bus per event
    (``per_bus``). Budget reports from the buses are only counted when
    ``count_reports`` is set.
    """
    if convention not in BIT_CONVENTIONS:
        raise ConfigError(f"bit convention must be one of {BIT_CONVENTIONS}, got {convention!r}")
    n = len(trace.bus_ids)
    if upto_k is None:
        events = trace.n_congestions
        iterations = trace.iterations
    else:
        events = int(np.searchsorted(trace.congestion_iterations, upto_k, side="right"))
        iterations = upto_k
    down = events * (n if convention == "per_bus" else 1)
    up = iterations * n * report_bits if count_reports else 0
    return down + up, {
        "central_to_agents": down,
        "agents_to_central": up,
        "congestion_events": events,
        "convention": convention,
    }


def iteration_reaching_gap(trace: SolverTrace, threshold: float) -> int | None:
    """First recorded iteration after which the oracle gap stays within ``threshold``."""
    if trace.history_gap is None:
        raise ValueError("trace has no oracle-gap history; pass an oracle to the solver")
    bad = np.flatnonzero(trace.history_gap > threshold)
    if len(bad) == 0:
        return int(trace.history_k[0])
    if bad[-1] == len(trace.history_gap) - 1:
        return None
    return int(trace.history_k[bad[-1] + 1])


def bits_at_gap(trace: SolverTrace, threshold: float, convention: str = "per_broadcast") -> int | None:
    """Feedback bits spent until the run settles within ``threshold`` of the oracle."""
    k = iteration_reaching_gap(trace, threshold)
    if k is None:
        return None
    if trace.solver == "aimd":
        return comms_bits(trace, convention, upto_k=k)[0]
    return k * trace.bits_per_broadcast
