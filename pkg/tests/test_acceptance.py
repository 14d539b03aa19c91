"""Acceptance gate: one PASS/FAIL line per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed as they
are decided and collected again in the terminal summary.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from atomsort.algorithms import REGISTRY, layer_coords, parallelize
from atomsort.algorithms.hungarian import plan_pairs, vacancies_and_excess
from atomsort.bench import aggregate, build_cells, default_jobs, scaling_study, sweep, write_trials
from atomsort.core import SPECIES1, ArrayState, PlanningError, SingleMove, Site, TargetPattern, apply_single, replay
from atomsort.noise import survival_probability
from atomsort.oracle import UnreachableError, bfs_kstar, d_minmax

from .conftest import random_instance

pytestmark = pytest.mark.slow

RESULTS: list[str] = []
JOBS = default_jobs()


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_criterion_1_survival_formula():
    t = 10.0 * math.log(2) / 1000
    p = survival_probability(t, 10.0, 1000)
    record("1", abs(p - 0.5) / 0.5 <= 1e-9, f"P(t = {t * 1e3:.4f} ms) = {p!r}")


# ---------------------------------------------------------------- 2


def _random_block_instance(rng, rows, cols, dual):
    state, _ = random_instance(rng, rows, cols, dual)
    for _ in range(50):
        h, w = int(rng.integers(1, rows + 1)), int(rng.integers(1, cols + 1))
        top, left = int(rng.integers(0, rows - h + 1)), int(rng.integers(0, cols - w + 1))
        grid = np.zeros((rows, cols), dtype=np.int8)
        grid[top : top + h, left : left + w] = rng.integers(1, 3, size=(h, w)) if dual else SPECIES1
        target = TargetPattern(grid)
        if all(state.count(s) >= target.count(s) for s in (1, 2)):
            return state, target
    return random_instance(rng, rows, cols, dual)


def _dominance(n_instances, max_sites, dual, seed):
    rng = np.random.default_rng(seed)
    shapes = [(m, n) for m in range(1, max_sites + 1) for n in range(1, max_sites + 1) if 2 <= m * n <= max_sites]
    planners = [r for r in REGISTRY.values() if (r.species == "dual") == dual]
    checked = plans = failures = unreachable = 0
    violations = []
    while checked < n_instances:
        rows, cols = shapes[int(rng.integers(len(shapes)))]
        maker = _random_block_instance if rng.random() < 0.5 else (lambda g, r, c, d: random_instance(g, r, c, d))
        state, target = maker(rng, rows, cols, dual)
        try:
            kstar = bfs_kstar(state, target).kstar
        except UnreachableError:
            unreachable += 1
            continue
        checked += 1
        cheb = d_minmax(state, target, "chebyshev", "complete")
        if cheb > kstar:
            violations.append(f"d_minmax {cheb} > k* {kstar} on {state.to_text()!r}")
        for planner in planners:
            try:
                program = planner.plan(state, target)
            except PlanningError:
                failures += 1
                continue
            plans += 1
            if len(program) < kstar:
                violations.append(f"{planner.name} used {len(program)} < k* {kstar}")
    return checked, plans, failures, unreachable, violations


def test_criterion_2_oracle_dominance():
    single = _dominance(500, 9, False, 2024)
    dual = _dominance(200, 6, True, 2025)
    violations = single[4] + dual[4]
    detail = (
        f"single: {single[0]} instances, {single[1]} plans checked ({single[2]} planner failures, {single[3]} unreachable skipped); "
        f"dual: {dual[0]} instances, {dual[1]} plans checked ({dual[2]} planner failures, {dual[3]} unreachable skipped); "
        f"{len(violations)} violations"
    )
    record("2", not violations and single[0] >= 500 and dual[0] >= 200, detail + ("; " + violations[0] if violations else ""))


# ---------------------------------------------------------------- 3


def test_criterion_3_parallelization_equivalence():
    rng = np.random.default_rng(3)
    mismatches = 0
    total_moves = 0
    for _ in range(10_000):
        rows, cols = (int(x) for x in rng.integers(2, 9, size=2))
        grid = (rng.random((rows, cols)) < rng.uniform(0.2, 0.8)).astype(np.int8)
        start = ArrayState(grid)
        moves = []
        for _ in range(int(rng.integers(1, 16))):
            atoms = np.argwhere(grid)
            if not len(atoms):
                break
            r, c = (int(x) for x in atoms[rng.integers(len(atoms))])
            dr, dc = (int(x) for x in rng.integers(-1, 2, size=2))
            if (dr or dc) and 0 <= r + dr < rows and 0 <= c + dc < cols and not grid[r + dr, c + dc]:
                mv = SingleMove(Site(r, c), Site(r + dr, c + dc))
                apply_single(grid, mv)
                moves.append(mv)
        aod = parallelize(moves, start)
        total_moves += len(aod)
        final, _ = replay(start, aod)
        mismatches += final != ArrayState(grid)
    record("3", mismatches == 0, f"10000 batches, {total_moves} AOD moves replayed, {mismatches} mismatches")


# ---------------------------------------------------------------- 4


def test_criterion_4_distance_optimality():
    rng = np.random.default_rng(4)
    done = worst = 0
    mismatches = []
    while done < 100:
        # cycle the pair count through 1..6 so every size is covered
        state, target = random_instance(rng, int(rng.integers(3, 6)), int(rng.integers(3, 6)))
        vac, exc = vacancies_and_excess(state.mutable_grid(), target.grid, SPECIES1)
        if len(vac) != 1 + done % 6 or len(exc) > 9:
            continue
        done += 1
        plan = plan_pairs(state, target)
        v, e = np.array(vac), np.array(exc)
        dist = np.sqrt(((v[:, None, :] - e[None, :, :]) ** 2).sum(-1))
        best = min(dist[np.arange(len(vac)), list(p)].sum() for p in itertools.permutations(range(len(exc)), len(vac)))
        worst = max(worst, len(vac))
        if abs(plan.lsap_cost - best) > 1e-9:
            mismatches.append((plan.lsap_cost, best))
    record("4", not mismatches, f"100 instances up to {worst} pairs, {len(mismatches)} cost mismatches against exhaustive permutations")


# ---------------------------------------------------------------- 5


@pytest.fixture(scope="module")
def scaling():
    return scaling_study(
        ["hungarian", "par_hungarian", "balance_compact", "zstar", "zstar_grid"],
        [4, 6, 8, 10, 12, 14],
        p_load=0.6,
        trials=200,
        base_seed=5,
        jobs=JOBS,
    )


def _b(study):
    return f"{study.fit.b:.3f}({study.fit.b_stderr:.3f})"


def test_criterion_5a_hungarian_exponent(scaling):
    b = scaling["hungarian"].fit.b
    record("5a", 1.32 <= b <= 1.62, f"Hungarian b = {_b(scaling['hungarian'])}, band [1.32, 1.62]")


def test_criterion_5b_par_hungarian_exponent(scaling):
    b, bh = scaling["par_hungarian"].fit.b, scaling["hungarian"].fit.b
    record("5b", 1.12 <= b <= 1.42 and b < bh, f"ParHungarian b = {_b(scaling['par_hungarian'])}, band [1.12, 1.42], below Hungarian {bh:.3f}")


def test_criterion_5c_balance_compact_exponent(scaling):
    b = scaling["balance_compact"].fit.b
    record("5c", 0.9 <= b <= 1.3, f"BalanceCompact b = {_b(scaling['balance_compact'])}, band [0.9, 1.3]")


def test_criterion_5d_zstar_exponent(scaling):
    b = scaling["zstar"].fit.b
    record("5d", 0.39 <= b <= 0.59, f"Z* b = {_b(scaling['zstar'])}, band [0.39, 0.59]")


def test_criterion_5e_zstar_grid_agrees(scaling):
    a, g = scaling["zstar"].fit, scaling["zstar_grid"].fit
    joint = math.hypot(a.b_stderr, g.b_stderr)
    gap = abs(a.b - g.b)
    record("5e", gap <= joint, f"Z* grid b = {_b(scaling['zstar_grid'])} vs Z* {_b(scaling['zstar'])}: gap {gap:.3f}, joint error {joint:.3f}")


# ---------------------------------------------------------------- 6


def _tradeoff_cells():
    return build_cells(
        {"rows": 14, "cols": 14, "side": 10, "p_load": 0.6, "settle_time": 0.0},
        {"vacuum_lifetime": [0.1, 10.0], "p_handoff": [0.0001, 0.0032]},
    )


@pytest.fixture(scope="module")
def tradeoff(tmp_path_factory):
    results = sweep(_tradeoff_cells(), ["hungarian", "balance_compact"], 500, 11, JOBS)
    path = tmp_path_factory.mktemp("tradeoff") / "trials.jsonl"
    write_trials(path, results)
    return {(r["algorithm"], r["vacuum_lifetime"], r["p_handoff"]): r for r in aggregate(results)}, path


def _corner(rows, t_v, p_h, winner, loser):
    w, l_ = rows[(winner, t_v, p_h)], rows[(loser, t_v, p_h)]
    gap = w["success_rate"] - l_["success_rate"]
    width = max(w["ci_hi"] - w["ci_lo"], l_["ci_hi"] - l_["ci_lo"])
    detail = (
        f"t_v = {t_v} s, p_h = {p_h}: {winner} {w['success_rate']:.3f} "
        f"[{w['ci_lo']:.3f}, {w['ci_hi']:.3f}] vs {loser} {l_['success_rate']:.3f} "
        f"[{l_['ci_lo']:.3f}, {l_['ci_hi']:.3f}], gap {gap:.3f} vs CI width {width:.3f}"
    )
    return gap > width, detail


def test_criterion_6a_short_lifetime_low_handoff(tradeoff):
    ok, detail = _corner(tradeoff[0], 0.1, 0.0001, "balance_compact", "hungarian")
    record("6a", ok, detail)


def test_criterion_6b_long_lifetime_high_handoff(tradeoff):
    ok, detail = _corner(tradeoff[0], 10.0, 0.0032, "hungarian", "balance_compact")
    record("6b", ok, detail)


# ---------------------------------------------------------------- 7

TARGETS = ["checkerboard", "zebra", "zones"]
SIDES = [6, 8, 10]
P_LOADS = [0.5, 0.6, 0.7, 0.8, 0.9]


@pytest.fixture(scope="module")
def dual_sizes():
    cells = build_cells({"pad": 4, "p_load": 0.6}, {"target": TARGETS, "side": SIDES})
    results = sweep(cells, ["inside_out", "par_hungarian_dual"], 500, 3, JOBS, resample_insufficient=100)
    return {(r["algorithm"], r["target"], r["side"]): r for r in aggregate(results)}


@pytest.fixture(scope="module")
def dual_loads():
    cells = build_cells({"rows": 14, "cols": 14, "side": 10}, {"target": TARGETS, "p_load": P_LOADS})
    results = sweep(cells, ["inside_out", "par_hungarian_dual"], 500, 3, JOBS, resample_insufficient=100)
    return {(r["algorithm"], r["target"], r["p_load"]): r for r in aggregate(results)}


def test_criterion_7a_inside_out_always_succeeds(dual_sizes):
    rates = {(t, s): dual_sizes[("inside_out", t, s)]["success_rate"] for t in TARGETS for s in SIDES}
    n = min(dual_sizes[("inside_out", t, s)]["n_trials"] for t in TARGETS for s in SIDES)
    record("7a", all(r == 1.0 for r in rates.values()), f"InsideOut success over {n} seeds per cell: " + ", ".join(f"{t} {s}: {r:.3f}" for (t, s), r in rates.items()))


def test_criterion_7b_dual_par_hungarian_degrades(dual_sizes):
    ok, parts = True, []
    for t in TARGETS:
        rates = [dual_sizes[("par_hungarian_dual", t, s)]["success_rate"] for s in SIDES]
        ok &= all(a > b for a, b in zip(rates, rates[1:])) and rates[-1] < 0.5
        parts.append(f"{t} " + " > ".join(f"{r:.3f}" for r in rates))
    record("7b", ok, "dual ParHungarian success by side 6/8/10: " + "; ".join(parts))


def test_criterion_7c_inside_out_time_non_increasing(dual_loads):
    ok, parts = True, []
    for t in TARGETS:
        times = [dual_loads[("inside_out", t, p)]["mean_time_s"] * 1e3 for p in P_LOADS]
        mono = all(b <= a for a, b in zip(times, times[1:]))
        ok &= mono
        parts.append(f"{t} " + ", ".join(f"{x:.2f}" for x in times) + ("" if mono else " (rises)"))
    record("7c", ok, "InsideOut mean time (ms) at p_load 0.5..0.9: " + "; ".join(parts))


def test_criterion_7d_crossover(dual_loads):
    ok, parts = True, []
    for t in TARGETS:
        slower = [
            p
            for p in P_LOADS
            if p >= 0.6
            and dual_loads[("par_hungarian_dual", t, p)]["mean_time_s"] > dual_loads[("inside_out", t, p)]["mean_time_s"]
        ]
        ok &= bool(slower)
        ratios = [
            dual_loads[("par_hungarian_dual", t, p)]["mean_time_s"] / dual_loads[("inside_out", t, p)]["mean_time_s"]
            for p in P_LOADS
        ]
        parts.append(f"{t} " + ", ".join(f"{r:.2f}" for r in ratios))
    record("7d", ok, "dual ParHungarian / InsideOut mean time at p_load 0.5..0.9: " + "; ".join(parts))


# ---------------------------------------------------------------- 8


def test_criterion_8_layer_formula():
    k1 = sorted(layer_coords(1, 10, 10))
    k2 = layer_coords(2, 10, 10)
    box = {(r, c) for r in range(3, 7) for c in range(3, 7)} - {(r, c) for r in (4, 5) for c in (4, 5)}
    centre = layer_coords(1, 5, 5)
    ok = k1 == [(4, 4), (4, 5), (5, 4), (5, 5)] and len(k2) == 12 and set(k2) == box and centre == [(2, 2)]
    record("8", ok, f"10x10 k=1 {[tuple(x) for x in k1]}; 10x10 k=2 {len(k2)} sites; 5x5 k=1 {[tuple(x) for x in centre]}")


# ---------------------------------------------------------------- 9


def test_criterion_9_reproducibility(tradeoff, tmp_path):
    _, first = tradeoff
    again = tmp_path / "again.jsonl"
    write_trials(again, sweep(_tradeoff_cells(), ["hungarian", "balance_compact"], 500, 11, max(2, JOBS)))
    same_tradeoff = first.read_bytes() == again.read_bytes()
    cells = build_cells({"pad": 4, "p_load": 0.6}, {"target": TARGETS, "side": [6]})
    runs = []
    for jobs in (1, 2):
        path = tmp_path / f"dual_{jobs}.jsonl"
        write_trials(path, sweep(cells, ["inside_out", "par_hungarian_dual"], 50, 3, jobs, 100))
        runs.append(path.read_bytes())
    studies = [scaling_study(["hungarian", "zstar"], [4, 6, 8], trials=20, base_seed=5, jobs=j) for j in (1, 2)]
    same_scaling = all(studies[0][k].trials == studies[1][k].trials for k in studies[0])
    ok = same_tradeoff and runs[0] == runs[1] and same_scaling
    record("9", ok, f"tradeoff trials.jsonl identical: {same_tradeoff}; dual-species slice identical: {runs[0] == runs[1]}; scaling trials identical: {same_scaling}")
