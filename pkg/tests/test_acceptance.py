"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The AIMD criteria run the
fixture fleet for 20 seeds and take several minutes on one core.
"""

import json
import shutil
import time

import numpy as np
import pytest

from conftest import FIXTURE_AIMD, FIXTURE_E_AV, random_utility, utility_from_pairs
from oracles import GRID, knapsack_grid, knapsack_lp
from pheballoc import AdmmConfig, AimdConfig, AllocationProblem, admm_solve, aimd_solve, central_solve
from pheballoc import data_path, nmae, synthetic_series
from pheballoc.aimd import bits_at_gap, suggest_gamma
from pheballoc.baselines import admm_bits
from pheballoc.problem import oracle_gap
from pheballoc.scenario import run

SEEDS = range(20)
MASK_SEEDS = range(5)
GAP = 0.02


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return report


def _aimd_run(problem, oracle, seed, mask="identity"):
    cfg = AimdConfig(**FIXTURE_AIMD, seed=seed, mask=mask, record_every=1000, record_events=False)
    t0 = time.perf_counter()
    tr = aimd_solve(problem, cfg, oracle)
    return {
        "seed": seed,
        "gap": tr.oracle_gap,
        "spread": tr.consensus_spread,
        "runtime": time.perf_counter() - t0,
        "bits_per_broadcast": bits_at_gap(tr, GAP, "per_broadcast"),
        "bits_per_bus": bits_at_gap(tr, GAP, "per_bus"),
        "d": tr.final.d,
    }


@pytest.fixture(scope="module")
def aimd_runs(fixture_problem, fixture_oracle):
    return [_aimd_run(fixture_problem, fixture_oracle, s) for s in SEEDS]


def test_c01_knapsack_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_lp, ok = 0.0, True
    for _ in range(100):
        n = int(rng.integers(1, 13))
        costs, values = rng.uniform(0.05, 2.0, n), rng.uniform(0.0, 5.0, n)
        u = utility_from_pairs(costs, values)
        d = float(rng.uniform(0.0, u.capacity))
        lp, _ = knapsack_lp(costs, values, d)
        grid = knapsack_grid(costs, values, d, GRID)
        worst_lp = max(worst_lp, abs(u(d) - lp))
        ok &= grid - 1e-9 <= u(d) <= grid + values.max() * GRID + 1e-9
    elapsed = time.perf_counter() - t0
    ok &= worst_lp < 1e-7 and elapsed < 10.0
    verdict(1, ok, f"100 routes, max |greedy - LP| = {worst_lp:.2e}, within gamma-grid bound, {elapsed:.2f} s")


def test_c02_concavity(verdict):
    rng = np.random.default_rng(99)
    worst = -np.inf
    for _ in range(1000):
        u = random_utility(rng)
        d1, d2 = rng.uniform(0, u.capacity, 2)
        lam = rng.uniform(0, 1)
        worst = max(worst, lam * u(d1) + (1 - lam) * u(d2) - u(lam * d1 + (1 - lam) * d2))
    verdict(2, worst <= 1e-9, f"1000 draws, max violation {worst:.2e} (tolerance 1e-9)")


def test_c03_aimd_optimality(verdict, aimd_runs):
    good = [r for r in aimd_runs if r["gap"] <= GAP]
    slowest = max(r["runtime"] for r in aimd_runs)
    ok = len(good) >= 0.95 * len(aimd_runs) and slowest < 60.0
    gaps = ", ".join(f"{100 * r['gap']:.2f}" for r in aimd_runs)
    verdict(3, ok, f"{len(good)}/{len(aimd_runs)} seeds within 2% (gaps %: {gaps}); slowest {slowest:.1f} s")


def test_c04_kkt_consensus(verdict, aimd_runs):
    good = [r for r in aimd_runs if r["spread"] < 0.05]
    worst = max(r["spread"] for r in aimd_runs)
    ok = len(good) >= 0.95 * len(aimd_runs)
    verdict(4, ok, f"{len(good)}/{len(aimd_runs)} seeds with spread < 5% (worst {100 * worst:.2f}%)")


def test_c05_admm_agreement(verdict, fixture_problem, fixture_oracle):
    fixture = admm_solve(fixture_problem, AdmmConfig(), fixture_oracle)
    rng = np.random.default_rng(31)
    gaps = []
    for _ in range(20):
        n = int(rng.integers(2, 9))
        us = tuple(random_utility(rng, bus_id=f"b{i}") for i in range(n))
        total = sum(u.capacity for u in us)
        p = AllocationProblem(us, float(rng.uniform(0.05, 0.95) * total))
        tr = admm_solve(p)
        gaps.append(oracle_gap(tr.final.d, central_solve(p).d, p.e_av) if tr.converged else np.inf)
    ok = fixture.converged and fixture.oracle_gap < 0.01 and max(gaps) < 0.01
    verdict(5, ok, f"fixture gap {100 * fixture.oracle_gap:.4f}% in {fixture.iterations} iterations; "
                   f"random instances max gap {100 * max(gaps):.4f}%")


def test_c06_communication_ordering(verdict, aimd_runs, fixture_problem, fixture_oracle):
    admm = admm_solve(fixture_problem, AdmmConfig(), fixture_oracle)
    admm_at_gap = bits_at_gap(admm, GAP)
    per_broadcast = [r["bits_per_broadcast"] for r in aimd_runs]
    per_bus = [r["bits_per_bus"] for r in aimd_runs]
    if any(b is None for b in per_broadcast):
        verdict(6, False, "some AIMD runs never settled within 2%")
    med_b, med_n = float(np.median(per_broadcast)), float(np.median(per_bus))
    ok = med_b < admm_at_gap and med_n < admm_at_gap
    verdict(6, ok, f"bits to settle within 2%: ADMM {admm_at_gap} (total {admm_bits(admm)}), "
                   f"AIMD median per-broadcast {med_b:.0f}, per-bus {med_n:.0f}")


def test_c07_savings_monotone(verdict, fixture_problem):
    s = [central_solve(AllocationProblem(fixture_problem.utilities, e)).savings for e in (50, 100, 250)]
    ok = s[0] < s[1] < s[2]
    verdict(7, ok, "oracle savings kg at 50/100/250 kWh: " + " < ".join(f"{x / 1000:.2f}" for x in s))


def test_c08_symmetry(verdict, fleet_utilities):
    base = fleet_utilities[0]
    n, e_av = 5, 60.0
    p = AllocationProblem(tuple(utility_from_pairs(base.section_cost, base.section_value, f"b{i}")
                                for i in range(n)), e_av)
    share = np.full(n, e_av / n)
    oracle = central_solve(p)
    admm = admm_solve(p)
    gaps = []
    for seed in range(5):
        cfg = AimdConfig(alpha=e_av / (n * 50), gamma_gain=suggest_gamma(p), k_max=1_000_000, seed=seed)
        gaps.append(aimd_solve(p, cfg, oracle).oracle_gap)
    ok = (np.allclose(oracle.d, share, rtol=0, atol=1e-9)
          and np.allclose(admm.final.d, share, rtol=0, atol=1e-5)
          and max(gaps) < GAP)
    verdict(8, ok, f"{n} identical buses, {e_av} kWh: oracle err {np.abs(oracle.d - share).max():.1e}, "
                   f"ADMM err {np.abs(admm.final.d - share).max():.1e}, AIMD max gap {100 * max(gaps):.2f}%")


def test_c09_mask_invariance(verdict, aimd_runs, fixture_problem, fixture_oracle):
    masked = [_aimd_run(fixture_problem, fixture_oracle, s, "affine(2,0)") for s in MASK_SEEDS]
    plain = [r for r in aimd_runs if r["seed"] in MASK_SEEDS]
    diff = max(oracle_gap(a["d"], b["d"], FIXTURE_E_AV) for a, b in zip(masked, plain))
    ok = all(r["gap"] <= GAP for r in masked + plain)
    verdict(9, ok, f"affine(2,0) gaps % {[round(100 * r['gap'], 2) for r in masked]}, identity gaps % "
                   f"{[round(100 * r['gap'], 2) for r in plain]}; max identity-vs-mask difference {100 * diff:.2f}%")


def test_c10_nmae_statistics(verdict):
    rep = nmae(synthetic_series(n_days=100, frac_within=0.8, threshold=3.0, max_error=7.0))
    ok = rep.fraction_within == 0.8 and abs(rep.max - 7.0) < 1e-9
    verdict(10, ok, f"fraction within 3% = {rep.fraction_within}, max = {rep.max:.6f}%")


def test_c11_determinism(verdict, tmp_path):
    shutil.copy(data_path("fleet15.json"), tmp_path)
    cfg = json.loads(data_path("scenario_fleet15.json").read_text())
    (tmp_path / "s.json").write_text(json.dumps(cfg))
    mismatches, n_files = [], 0
    for seed in (0, 7):
        run(tmp_path / "s.json", out_dir=tmp_path / f"a{seed}", seed=seed)
        run(tmp_path / "s.json", out_dir=tmp_path / f"b{seed}", seed=seed)
        for f in sorted((tmp_path / f"a{seed}").glob("*.csv")):
            n_files += 1
            if f.read_bytes() != (tmp_path / f"b{seed}" / f.name).read_bytes():
                mismatches.append(f"{seed}/{f.name}")
    verdict(11, not mismatches, f"{n_files} CSV files compared over 2 seeds, mismatches: {mismatches or 'none'}")
