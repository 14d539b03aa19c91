"""Seeded Monte Carlo trials, parameter sweeps, and power-law scaling fits."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import median
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .algorithms import get_rearranger
from .assignment import InsufficientAtomsError
from .core import DONT_CARE, SPECIES1, SPECIES2, ArrayState, MoveProgram, PlanningError, TargetPattern, matches_target
from .noise import LossEvent, NoiseParams, load_array, step_noise
from .oracle import lower_bound_time

TARGET_KINDS = ("block", "checkerboard", "zebra", "zones")
BOUNDS = {"zstar": "euclidean", "zstar_grid": "manhattan"}


# ---------------------------------------------------------------- targets


def make_target(kind: str, rows: int, cols: int, side: int, side_cols: int | None = None) -> TargetPattern:
    """Centred ``side`` x ``side_cols`` target of the given kind.

    ``block`` is a filled species-1 rectangle.  The dual kinds fill the same
    rectangle with two species: ``checkerboard`` by site parity, ``zebra`` by
    alternating columns, ``zones`` as a left half of species 1 and a right
    half of species 2.
    """
    h, w = side, side_cols or side
    if h > rows or w > cols:
        raise ValueError(f"{h}x{w} target does not fit in a {rows}x{cols} array")
    r, c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    if kind == "block":
        block = np.full((h, w), SPECIES1)
    elif kind == "checkerboard":
        block = np.where((r + c) % 2 == 0, SPECIES1, SPECIES2)
    elif kind == "zebra":
        block = np.where(c % 2 == 0, SPECIES1, SPECIES2)
    elif kind == "zones":
        block = np.where(c < w // 2, SPECIES1, SPECIES2)
    else:
        raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")
    grid = np.full((rows, cols), DONT_CARE, dtype=np.int8)
    top, left = (rows - h) // 2, (cols - w) // 2
    grid[top : top + h, left : left + w] = block
    return TargetPattern(grid)


def reservoir_side(side: int, p_load: float, margin: int = 2) -> int:
    """Array side whose expected atom count covers a ``side`` x ``side`` target."""
    return math.ceil(side / math.sqrt(p_load)) + margin


# ---------------------------------------------------------------- trials


def trial_seed(base_seed: int, cell: int, trial: int) -> int:
    """64-bit seed derived from (base seed, cell index, trial index)."""
    lo, hi = np.random.SeedSequence([base_seed, cell, trial]).generate_state(2)
    return int(lo) | int(hi) << 32


@dataclass
class TrialResult:
    algorithm: str
    seed: int
    success: bool
    aod_moves: int
    simulated_time: float
    picked_atoms: int = 0
    reason: str = ""
    instance: dict = field(default_factory=dict)
    loss_events: list[LossEvent] = field(default_factory=list)
    executed: bool = True

    @property
    def planned(self) -> bool:
        return not self.reason

    def to_dict(self) -> dict:
        out = asdict(self)
        out["loss_events"] = [e.to_dict() for e in self.loss_events]
        return out

    def to_json(self) -> str:
        return json.dumps(finite(self.to_dict()), sort_keys=True)


def finite(obj):
    """Replace non-finite floats (an infinite lifetime) with None for strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [finite(v) for v in obj]
    return obj


def execute(
    state: ArrayState,
    program: MoveProgram,
    params: NoiseParams,
    rng: np.random.Generator,
    record: bool = False,
) -> tuple[ArrayState, float, int, list[LossEvent], list[dict]]:
    """Open-loop replay of ``program`` with losses drawn after every move.

    Returns the final state, total simulated time, picked-atom count, loss
    events, and, with ``record``, one frame per move holding the move, the
    picked sites, its losses, the cumulative time and the array afterwards.
    """
    grid = state.mutable_grid()
    clock, picked_total = 0.0, 0
    events: list[LossEvent] = []
    frames = []
    for i, move in enumerate(program.moves):
        picked, lost, dt = step_noise(grid, move, None, params, rng, i, clock)
        clock += dt
        picked_total += len(picked)
        events.extend(lost)
        if record:
            frames.append(
                {
                    "frame": i + 1,
                    "move": move.to_dict(),
                    "picked": [list(p) for p in picked],
                    "losses": [e.to_dict() for e in lost],
                    "time_s": clock,
                    "state": grid.tolist(),
                }
            )
    return ArrayState(grid), clock, picked_total, events, frames


def initial_state(
    species: str,
    rows: int,
    cols: int,
    target: TargetPattern,
    params: NoiseParams,
    rng: np.random.Generator,
    resample_insufficient: int = 0,
) -> ArrayState:
    """Stochastically loaded array, redrawn up to ``resample_insufficient`` times until each species suffices."""
    dual = species == "dual" or bool((target.grid == SPECIES2).any())
    state = load_array(rows, cols, params, rng, dual)
    for _ in range(resample_insufficient):
        if sufficient(state, target):
            break
        state = load_array(rows, cols, params, rng, dual)
    return state


def run_trial(
    algorithm: str,
    rows: int,
    cols: int,
    target: TargetPattern,
    params: NoiseParams,
    seed: int,
    resample_insufficient: int = 0,
    instance: dict | None = None,
) -> TrialResult:
    """Load, plan, replay with noise, and score one trial.

    With ``resample_insufficient`` > 0 the array is redrawn from the same
    random stream up to that many times until each species suffices.
    Planner failures are recorded as unsuccessful trials; when the planner
    hands back the moves it made before giving up, they are replayed and timed.
    """
    rearranger = get_rearranger(algorithm)
    rng = np.random.default_rng(seed)
    info = dict(instance or {}, rows=rows, cols=cols)
    state = initial_state(rearranger.species, rows, cols, target, params, rng, resample_insufficient)
    info["atoms"] = state.count()
    reason = ""
    try:
        program = rearranger.plan(state, target)
    except PlanningError as exc:
        reason = "insufficient" if isinstance(exc, InsufficientAtomsError) else type(exc).__name__
        program = getattr(exc, "partial", None)
        if program is None:
            return TrialResult(algorithm, seed, False, 0, 0.0, 0, reason, info, executed=False)
    final, clock, picked, events, _ = execute(state, program, params, rng)
    success = not reason and matches_target(final, target)
    return TrialResult(algorithm, seed, success, len(program), clock, picked, reason, info, events)


def sufficient(state: ArrayState, target: TargetPattern) -> bool:
    return all(state.count(sp) >= target.count(sp) for sp in (SPECIES1, SPECIES2))


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class Cell:
    """One point of a sweep: geometry, target, and noise parameters."""

    index: int
    rows: int
    cols: int
    target_kind: str
    side: int
    params: NoiseParams

    def descriptor(self) -> dict:
        return {
            "cell": self.index,
            "rows": self.rows,
            "cols": self.cols,
            "target": self.target_kind,
            "side": self.side,
            **self.params.to_dict(),
        }

    def target(self) -> TargetPattern:
        return make_target(self.target_kind, self.rows, self.cols, self.side)


def build_cells(
    base: dict, sweep: dict[str, Sequence] | None = None
) -> list[Cell]:
    """Cartesian product of ``sweep`` values over the flat ``base`` config.

    Keys are ``rows``, ``cols``, ``target``, ``side``, ``pad``, ``margin``
    and any :class:`NoiseParams` field.  When ``rows`` is absent the array
    side is ``side + pad`` if ``pad`` is set, else :func:`reservoir_side` of
    the target side and loading probability.
    """
    sweep = sweep or {}
    keys = sorted(sweep)
    cells = []
    noise_fields = set(NoiseParams.__dataclass_fields__)
    for i, values in enumerate(itertools.product(*(sweep[k] for k in keys))):
        cfg = dict(base, **dict(zip(keys, values)))
        params = NoiseParams(**{k: float(v) for k, v in cfg.items() if k in noise_fields})
        side = int(cfg.get("side", 10))
        if cfg.get("rows"):
            rows = int(cfg["rows"])
        elif cfg.get("pad") is not None:
            rows = side + int(cfg["pad"])
        else:
            rows = reservoir_side(side, params.p_load, int(cfg.get("margin", 2)))
        cols = int(cfg.get("cols") or rows)
        cells.append(Cell(i, rows, cols, cfg.get("target", "block"), side, params))
    return cells


def _run_task(task) -> TrialResult:
    algorithm, cell, trial, base_seed, resample = task
    seed = trial_seed(base_seed, cell.index, trial)
    return run_trial(
        algorithm, cell.rows, cell.cols, cell.target(), cell.params, seed, resample, cell.descriptor()
    )


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def run_tasks(tasks: list, jobs: int = 1) -> list[TrialResult]:
    """Run trial tasks, returning results in task order whatever the worker count."""
    if jobs <= 1 or len(tasks) < 2:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def sweep(
    cells: Sequence[Cell],
    algorithms: Sequence[str],
    trials: int,
    base_seed: int,
    jobs: int = 1,
    resample_insufficient: int = 0,
) -> list[TrialResult]:
    """Every algorithm on every cell; trial seeds are shared across algorithms."""
    for name in algorithms:
        get_rearranger(name)
    tasks = [
        (name, cell, t, base_seed, resample_insufficient)
        for cell in cells
        for name in algorithms
        for t in range(trials)
    ]
    return run_tasks(tasks, jobs)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = stats.binomtest(successes, n).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


AGGREGATE_FIELDS = [
    "algorithm",
    "cell",
    "rows",
    "cols",
    "target",
    "side",
    "p_load",
    "vacuum_lifetime",
    "p_handoff",
    "site_spacing",
    "tweezer_speed",
    "settle_time",
    "n_trials",
    "n_planned",
    "n_executed",
    "success_rate",
    "ci_lo",
    "ci_hi",
    "mean_time_s",
    "median_time_s",
    "mean_moves",
]


def aggregate(results: Iterable[TrialResult]) -> list[dict]:
    """One row per (algorithm, cell); order-independent in its input.

    Time and move statistics average over trials that executed moves,
    including partial programs of planners that gave up; success rate and
    its Wilson interval count every trial.
    """
    groups: dict[tuple, list[TrialResult]] = {}
    for r in results:
        groups.setdefault((r.algorithm, r.instance.get("cell", 0)), []).append(r)
    rows = []
    for (name, cell), group in sorted(groups.items()):
        group.sort(key=lambda r: r.seed)
        wins = sum(r.success for r in group)
        lo, hi = wilson_interval(wins, len(group))
        planned = [r for r in group if r.planned]
        ran = [r for r in group if r.executed]
        times = [r.simulated_time for r in ran]
        inst = group[0].instance
        row = {k: inst.get(k, "") for k in AGGREGATE_FIELDS[1:12]}
        row.update(
            algorithm=name,
            n_trials=len(group),
            n_planned=len(planned),
            n_executed=len(ran),
            success_rate=wins / len(group),
            ci_lo=lo,
            ci_hi=hi,
            mean_time_s=float(np.mean(times)) if times else float("nan"),
            median_time_s=float(median(times)) if times else float("nan"),
            mean_moves=float(np.mean([r.aod_moves for r in ran])) if ran else float("nan"),
        )
        rows.append(row)
    return rows


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScalingFit:
    """t = c * N**b fitted by least squares on (ln N, ln t)."""

    c: float
    b: float
    b_stderr: float


def fit_scaling(sizes: Sequence[float], times: Sequence[float]) -> ScalingFit:
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(times, dtype=float)
    if x.shape != y.shape or len(np.unique(x)) < 3:
        raise ValueError("need at least three distinct sizes with one time each")
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("sizes and times must be positive")
    fit = stats.linregress(np.log(x), np.log(y))
    return ScalingFit(float(math.exp(fit.intercept)), float(fit.slope), float(fit.stderr))


@dataclass
class ScalingStudy:
    algorithm: str
    p_load: float
    sides: list[int]
    mean_times: list[float]
    n_trials: list[int]
    fit: ScalingFit
    trials: list[dict]

    def fit_row(self) -> dict:
        return {"algorithm": self.algorithm, "p_load": self.p_load, **asdict(self.fit)}


def _scaling_task(task) -> dict:
    name, side, p_load, params, base_seed, cell, trial = task
    rows = reservoir_side(side, p_load)
    target = make_target("block", rows, rows, side)
    seed = trial_seed(base_seed, cell, trial)
    if name in BOUNDS:
        rng = np.random.default_rng(seed)
        state = load_array(rows, rows, params, rng)
        for _ in range(100):
            if state.count() >= side * side:
                break
            state = load_array(rows, rows, params, rng)
        t_lb, d = lower_bound_time(state, target, params, BOUNDS[name])
        return {"algorithm": name, "side": side, "seed": seed, "time": t_lb, "d_minmax": d, "success": True}
    r = run_trial(name, rows, rows, target, params, seed, 100, {"side": side})
    return {"algorithm": name, "side": side, "seed": seed, "time": r.simulated_time, "moves": r.aod_moves, "success": r.success}


def scaling_study(
    algorithms: Sequence[str],
    sides: Sequence[int],
    p_load: float = 0.6,
    trials: int = 200,
    base_seed: int = 0,
    params: NoiseParams | None = None,
    jobs: int = 1,
) -> dict[str, ScalingStudy]:
    """Mean rearrangement time (or bound) against target size N = side**2.

    Each side is a cell, so every algorithm sees the same loaded arrays.
    Noise-free by default; ``params`` supplies the time model.
    """
    params = params or NoiseParams(p_load=p_load)
    params = NoiseParams(**dict(params.to_dict(), p_load=p_load))
    tasks = [
        (name, side, p_load, params, base_seed, cell, t)
        for cell, side in enumerate(sides)
        for name in algorithms
        for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scaling_task, tasks, chunksize=8))
    else:
        rows = [_scaling_task(t) for t in tasks]
    out = {}
    for name in algorithms:
        mine = [r for r in rows if r["algorithm"] == name]
        means, counts = [], []
        for side in sides:
            ok = [r["time"] for r in mine if r["side"] == side and r["success"]]
            if not ok:
                raise PlanningError(f"{name}: no successful trials at side {side}")
            means.append(float(np.mean(ok)))
            counts.append(len(ok))
        fit = fit_scaling([s * s for s in sides], means)
        out[name] = ScalingStudy(name, p_load, list(sides), means, counts, fit, mine)
    return out


# ---------------------------------------------------------------- output


def write_trials(path, results: Iterable[TrialResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")


def write_csv(path, rows: list[dict], fields: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in fields})


def _fmt(value):
    return repr(value) if isinstance(value, float) else value


FIT_FIELDS = ["algorithm", "p_load", "c", "b", "b_stderr"]
