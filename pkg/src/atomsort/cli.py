"""Command-line entry point: ``atomsort run | trace | oracle``.

Configs are JSON with the sections ``geometry``, ``target``, ``noise``,
``algorithm``, ``sweep`` and ``output``; every field can be overridden with
``--set section.field=value`` (value parsed as JSON, else kept as a string).
"""

from __future__ import annotations

import argparse
import copy
import datetime as dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .algorithms import REGISTRY, UnknownAlgorithmError, get_rearranger
from .core import ArrayState, PlanningError, TargetPattern, matches_target
from .noise import NoiseParams
from .oracle import InstanceTooLargeError, UnreachableError, bfs_kstar

SEED_ENV = "ATOMSORT_SEED"

DEFAULTS = {
    "geometry": {"rows": None, "cols": None, "pad": None, "margin": 2},
    "target": {"kind": "block", "side": 10},
    "noise": {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in NoiseParams().to_dict().items()},
    "algorithm": {"names": ["hungarian"]},
    "sweep": {"trials": 1, "base_seed": None, "resample_insufficient": 0, "values": {}, "scaling_sides": []},
    "output": {"dir": "runs", "jobs": None},
}

SWEEP_KEYS = {"rows", "cols", "pad", "margin", "target", "side"} | set(NoiseParams.__dataclass_fields__)


class ConfigError(ValueError):
    """A config file or override that cannot be used."""


# ---------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, fields in data.items():
        if section not in cfg:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(fields, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key, value in fields.items():
            set_field(cfg, f"{section}.{key}", value, path)
    return cfg


def set_field(cfg: dict, dotted: str, value, origin: str = "--set") -> None:
    section, _, key = dotted.partition(".")
    if section not in cfg or not key:
        raise ConfigError(f"{origin}: unknown field {dotted!r}")
    if key not in cfg[section]:
        raise ConfigError(f"{origin}: unknown field {dotted!r}")
    cfg[section][key] = value


def parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"--set {text!r}: expected key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def effective_config(args) -> dict:
    cfg = load_config(args.config)
    for item in args.set or []:
        set_field(cfg, *parse_override(item))
    if args.algo:
        cfg["algorithm"]["names"] = list(args.algo)
    if args.seed is not None:
        cfg["sweep"]["base_seed"] = args.seed
    elif cfg["sweep"]["base_seed"] is None:
        cfg["sweep"]["base_seed"] = int(os.environ.get(SEED_ENV, 0))
    if getattr(args, "jobs", None) is not None:
        cfg["output"]["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        cfg["output"]["dir"] = args.out
    names = cfg["algorithm"]["names"]
    if isinstance(names, str):
        cfg["algorithm"]["names"] = names = [names]
    for name in names:
        if name not in bench.BOUNDS:
            get_rearranger(name)
    unknown = set(cfg["sweep"]["values"]) - SWEEP_KEYS
    if unknown:
        raise ConfigError(f"sweep.values: unknown keys {sorted(unknown)}")
    return cfg


def base_cell(cfg: dict) -> dict:
    base = {k: v for k, v in cfg["noise"].items() if v is not None}
    base.update(target=cfg["target"]["kind"], side=cfg["target"]["side"], margin=cfg["geometry"]["margin"])
    for key in ("rows", "cols", "pad"):
        if cfg["geometry"][key] is not None:
            base[key] = cfg["geometry"][key]
    return base


def noise_params(cfg: dict) -> NoiseParams:
    return NoiseParams.from_dict(cfg["noise"])


# ---------------------------------------------------------------- run


def run_dir(root: str, seed: int) -> Path:
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
    path = Path(root) / f"run_{stamp}_{seed}"
    suffix = 1
    while path.exists():
        path = Path(root) / f"run_{stamp}_{seed}_{suffix}"
        suffix += 1
    path.mkdir(parents=True)
    return path


def summary_line(row: dict) -> str:
    time_ms = row["mean_time_s"] * 1e3
    return (
        f"cell {row['cell']} {row['algorithm']} {row['rows']}x{row['cols']} {row['target']} side={row['side']} "
        f"p_load={row['p_load']} t_v={row['vacuum_lifetime']} p_h={row['p_handoff']}: "
        f"success {row['success_rate']:.3f} [{row['ci_lo']:.3f}, {row['ci_hi']:.3f}] "
        f"time {time_ms:.3f} ms over {row['n_trials']} trials"
    )


def cmd_run(args) -> int:
    cfg = effective_config(args)
    sweep_cfg = cfg["sweep"]
    seed = int(sweep_cfg["base_seed"])
    jobs = cfg["output"]["jobs"] or bench.default_jobs()
    out = run_dir(cfg["output"]["dir"], seed)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    names = cfg["algorithm"]["names"]
    fits: list[dict] = []
    if sweep_cfg["scaling_sides"]:
        params = noise_params(cfg)
        studies = bench.scaling_study(
            names, sweep_cfg["scaling_sides"], params.p_load, sweep_cfg["trials"], seed, params, jobs
        )
        with open(out / "trials.jsonl", "w", encoding="utf-8") as fh:
            for study in studies.values():
                for row in study.trials:
                    fh.write(json.dumps(bench.finite(row), sort_keys=True) + "\n")
        rows = []
        for name, study in studies.items():
            fits.append(study.fit_row())
            for side, mean, n in zip(study.sides, study.mean_times, study.n_trials):
                rows.append({"algorithm": name, "side": side, "p_load": study.p_load, "mean_time_s": mean, "n_trials": n})
            print(f"{name}: b = {study.fit.b:.3f} +/- {study.fit.b_stderr:.3f} over sides {study.sides}")
        bench.write_csv(out / "aggregates.csv", rows, ["algorithm", "side", "p_load", "n_trials", "mean_time_s"])
    else:
        cells = bench.build_cells(base_cell(cfg), sweep_cfg["values"])
        results = bench.sweep(cells, names, sweep_cfg["trials"], seed, jobs, sweep_cfg["resample_insufficient"])
        bench.write_trials(out / "trials.jsonl", results)
        rows = bench.aggregate(results)
        bench.write_csv(out / "aggregates.csv", rows, bench.AGGREGATE_FIELDS)
        for row in rows:
            print(summary_line(row))
    bench.write_csv(out / "fits.csv", fits, bench.FIT_FIELDS)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------- trace


def render(grid) -> str:
    return "\n".join("".join(".AB"[v] for v in row) for row in grid)


def trace_frames(cfg: dict, seed: int, instance: str | None = None) -> tuple[list[dict], bool]:
    """Initial state plus one frame per AOD move of a single trial.

    With ``instance`` the array and target come from an instance file instead
    of a stochastic load; noise parameters still come from the config.
    """
    rearranger = get_rearranger(cfg["algorithm"]["names"][0])
    rng = np.random.default_rng(seed)
    if instance is not None:
        state, target = load_instance(instance)
        params = noise_params(cfg)
    else:
        cell = bench.build_cells(base_cell(cfg))[0]
        target, params = cell.target(), cell.params
        state = bench.initial_state(
            rearranger.species, cell.rows, cell.cols, target, params, rng, cfg["sweep"]["resample_insufficient"]
        )
    frames = [{"frame": 0, "move": None, "picked": [], "losses": [], "time_s": 0.0, "state": state.grid.tolist()}]
    try:
        program = rearranger.plan(state, target)
    except PlanningError as exc:
        program = getattr(exc, "partial", None)
        if program is None:
            return frames, False
    final, _, _, _, moves = bench.execute(state, program, params, rng, record=True)
    return frames + moves, matches_target(final, target)


def cmd_trace(args) -> int:
    cfg = effective_config(args)
    seed = int(cfg["sweep"]["base_seed"])
    frames, success = trace_frames(cfg, seed, args.instance)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for frame in frames:
            if args.ascii:
                lost = ", ".join(f"{e['kind']} at {tuple(e['site'])}" for e in frame["losses"])
                header = f"frame {frame['frame']}  t = {frame['time_s'] * 1e3:.3f} ms"
                print(header + (f"  lost: {lost}" if lost else ""), file=sink)
                print(render(frame["state"]) + "\n", file=sink)
            else:
                print(json.dumps(bench.finite(frame), sort_keys=True), file=sink)
    finally:
        if sink is not sys.stdout:
            sink.close()
    print(f"{len(frames) - 1} moves, success={success}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- oracle


def load_instance(path: str) -> tuple[ArrayState, TargetPattern]:
    """Instance JSON: {"state": ["1.", ...], "target": [".1", ...]}, rows as text.

    State rows use ``.``, ``1``/``A``, ``2``/``B``; target rows use ``.`` for
    don't-care and ``1``/``2`` for the required species.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return ArrayState.from_text(data["state"]), TargetPattern.from_text(data["target"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad instance: {exc}") from None


def cmd_oracle(args) -> int:
    state, target = load_instance(args.instance)
    try:
        result = bfs_kstar(state, target, args.mode)
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UnreachableError as exc:
        print(f"unreachable: {exc}")
        return 1
    print(f"k* = {result.kstar} ({result.states_explored} states explored)")
    for i, move in enumerate(result.witness.moves, 1):
        print(f"  {i}: rows {list(move.rows)} cols {list(move.cols)}")
    dual = state.is_dual or target.count(2) > 0
    for name, rearranger in REGISTRY.items():
        if (rearranger.species == "dual") != dual:
            continue
        try:
            count = str(len(rearranger.plan(state, target)))
        except PlanningError as exc:
            count = f"failed ({type(exc).__name__})"
        print(f"{name}: {count}")
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomsort", description="Atom rearrangement simulator and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help=f"base seed (default: config, then ${SEED_ENV}, then 0)")
        p.add_argument("--algo", action="append", help="algorithm name; repeat for several")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. noise.p_load=0.5")

    run = sub.add_parser("run", help="run trials, sweeps or a scaling study")
    common(run)
    run.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
    run.add_argument("--out", help="output root directory")
    run.set_defaults(func=cmd_run)

    trace = sub.add_parser("trace", help="emit the frames of one trial")
    common(trace)
    trace.add_argument("--instance", help="trace a fixed instance file instead of a random load")
    trace.add_argument("--ascii", action="store_true", help="render grids instead of JSON")
    trace.add_argument("--out", help="write frames to this file instead of stdout")
    trace.set_defaults(func=cmd_trace)

    oracle = sub.add_parser("oracle", help="exact minimum move count of a small instance")
    oracle.add_argument("instance", help="instance JSON file")
    oracle.add_argument("--mode", choices=("subset", "exact"), default="subset")
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownAlgorithmError, ValueError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
