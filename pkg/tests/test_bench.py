from __future__ import annotations

import json
import math

import numpy as np
import pytest

from atomsort.bench import (
    AGGREGATE_FIELDS,
    aggregate,
    build_cells,
    execute,
    fit_scaling,
    make_target,
    reservoir_side,
    run_trial,
    scaling_study,
    sweep,
    trial_seed,
    wilson_interval,
    write_csv,
    write_trials,
)
from atomsort.core import ArrayState, TargetPattern
from atomsort.noise import NoiseParams
from atomsort.oracle import bfs_kstar


def test_make_target_kinds():
    assert make_target("block", 6, 6, 2).count(1) == 4
    cb = make_target("checkerboard", 6, 6, 4)
    assert cb.count(1) == cb.count(2) == 8
    zebra = make_target("zebra", 6, 6, 4)
    assert zebra.grid[1, 1] == 1 and zebra.grid[1, 2] == 2
    zones = make_target("zones", 6, 6, 4)
    assert zones.grid[1, 1:3].tolist() == [1, 1] and zones.grid[1, 3:5].tolist() == [2, 2]
    with pytest.raises(ValueError):
        make_target("stars", 6, 6, 2)
    with pytest.raises(ValueError):
        make_target("block", 3, 3, 4)


def test_reservoir_side_covers_target():
    for side in range(2, 16):
        assert reservoir_side(side, 0.6) ** 2 * 0.6 >= side * side


def test_trial_seed_is_deterministic_and_distinct():
    assert trial_seed(1, 2, 3) == trial_seed(1, 2, 3)
    assert len({trial_seed(1, c, t) for c in range(5) for t in range(50)}) == 250


def test_noiseless_trial_succeeds():
    target = make_target("block", 10, 10, 5)
    r = run_trial("hungarian", 10, 10, target, NoiseParams(), 42, 100)
    assert r.success and r.planned and r.executed
    # each move takes the settle time plus one hop, sqrt(2) longer when diagonal
    assert r.aod_moves * 1.5e-4 <= r.simulated_time <= r.aod_moves * (1e-4 + 5e-5 * math.sqrt(2)) + 1e-12


def test_insufficient_trial_is_recorded():
    target = make_target("block", 4, 4, 4)
    r = run_trial("hungarian", 4, 4, target, NoiseParams(p_load=0.1), 1)
    assert not r.success and r.reason == "insufficient" and not r.executed


def test_trial_json_is_strict():
    r = run_trial("par_hungarian", 8, 8, make_target("block", 8, 8, 4), NoiseParams(), 3, 100)
    data = json.loads(r.to_json())
    assert data["instance"] == {"rows": 8, "cols": 8, "atoms": data["instance"]["atoms"]}
    assert "Infinity" not in r.to_json()


def test_execute_matches_oracle_witness():
    state, target = ArrayState.from_text(["1.."]), TargetPattern.from_text(["..1"])
    witness = bfs_kstar(state, target).witness
    final, clock, picked, events, frames = execute(state, witness, NoiseParams(), np.random.default_rng(0), True)
    assert [f["state"] for f in frames] == [[[0, 1, 0]], [[0, 0, 1]]]
    assert picked == 2 and events == []
    assert clock == pytest.approx(2 * 1.5e-4)


def test_build_cells_product():
    cells = build_cells({"side": 4, "rows": 8}, {"p_load": [0.5, 0.7], "vacuum_lifetime": [1.0, 10.0]})
    assert len(cells) == 4
    assert [c.index for c in cells] == [0, 1, 2, 3]
    assert {(c.params.p_load, c.params.vacuum_lifetime) for c in cells} == {(0.5, 1.0), (0.5, 10.0), (0.7, 1.0), (0.7, 10.0)}


def test_build_cells_pad_and_reservoir():
    assert build_cells({"side": 6, "pad": 4})[0].rows == 10
    assert build_cells({"side": 6, "p_load": 0.6})[0].rows == reservoir_side(6, 0.6)


def test_sweep_is_reproducible_and_job_independent(tmp_path):
    cells = build_cells({"side": 4, "rows": 8, "p_handoff": 0.01})
    a = sweep(cells, ["hungarian", "balance_compact"], 6, 9, jobs=1)
    b = sweep(cells, ["hungarian", "balance_compact"], 6, 9, jobs=2)
    write_trials(tmp_path / "a.jsonl", a)
    write_trials(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_algorithms_share_seeds():
    cells = build_cells({"side": 4, "rows": 8})
    results = sweep(cells, ["hungarian", "par_hungarian"], 3, 0)
    seeds = {r.algorithm: [x.seed for x in results if x.algorithm == r.algorithm] for r in results}
    assert seeds["hungarian"] == seeds["par_hungarian"]


def test_aggregate_and_csv(tmp_path):
    cells = build_cells({"side": 4, "rows": 8})
    results = sweep(cells, ["hungarian"], 5, 0)
    rows = aggregate(results)
    assert rows == aggregate(results[::-1])
    assert rows[0]["n_trials"] == 5 and rows[0]["success_rate"] == 1.0
    write_csv(tmp_path / "agg.csv", rows, AGGREGATE_FIELDS)
    header = (tmp_path / "agg.csv").read_text().splitlines()[0]
    assert header.split(",") == AGGREGATE_FIELDS


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-3) and hi == pytest.approx(0.5962, abs=1e-3)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_fit_recovers_power_law():
    sizes = np.array([16, 36, 64, 100, 144])
    fit = fit_scaling(sizes, 3e-4 * sizes**1.3)
    assert fit.b == pytest.approx(1.3) and fit.c == pytest.approx(3e-4)
    assert fit.b_stderr == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        fit_scaling([1, 2], [1, 2])


def test_scaling_study_small():
    studies = scaling_study(["hungarian", "zstar"], [3, 4, 5], trials=4, base_seed=1)
    assert studies["hungarian"].fit.b > 0
    assert studies["zstar"].n_trials == [4, 4, 4]
    assert all(math.isfinite(t) for t in studies["zstar"].mean_times)
