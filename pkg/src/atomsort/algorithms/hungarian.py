"""Hungarian (sequential) and ParHungarian (round-parallel) planners.

Both share one planning pass: vacancies and excess atoms are paired by a
Euclidean LSAP, then each pair is routed on a virtual copy of the array that
already reflects every earlier pair.  A pair gets a direct path when one
exists and is otherwise split into domino segments.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..assignment import InsufficientAtomsError, build_cost_matrix, solve_lsap
from ..core import (
    EMPTY,
    SPECIES1,
    SPECIES2,
    ArrayState,
    MoveProgram,
    PlanningError,
    SingleMove,
    Site,
    TargetPattern,
    apply_inplace,
    apply_single,
    combine_moves,
    matches_target,
)
from ..pathing import BlockedError, domino_decompose, shortest_direct_path
from .parallel import pack_moves


@dataclass
class PairPlan:
    """Sequential plan: per-path move lists in execution order and the species each carries."""

    pairs: list[tuple[Site, Site]]
    paths: list[list[SingleMove]]
    lsap_cost: float
    species: list[int]
    blocked: int = 0


def vacancies_and_excess(grid: np.ndarray, target: np.ndarray, species: int) -> tuple[list[Site], list[Site]]:
    vac = [Site(int(r), int(c)) for r, c in np.argwhere((target == species) & (grid != species))]
    exc = [Site(int(r), int(c)) for r, c in np.argwhere((grid == species) & (target != species))]
    return vac, exc


def check_sufficient(state: ArrayState, target: TargetPattern, species=(SPECIES1, SPECIES2)) -> None:
    if state.shape != target.shape:
        raise ValueError(f"shape mismatch: state {state.shape} vs target {target.shape}")
    for sp in species:
        have, need = state.count(sp), target.count(sp)
        if have < need:
            raise InsufficientAtomsError(f"species {sp}: {have} atoms for {need} target sites")


def plan_pairs(
    state: ArrayState,
    target: TargetPattern,
    species_rule: str = "single",
    connectivity: int = 8,
    skip_blocked: bool = False,
) -> PairPlan:
    """Pair vacancies with excess atoms and route each pair on a virtual array.

    With ``skip_blocked`` a pair whose route is blocked is dropped instead of
    raising, and the remaining pairs are still routed; ``PairPlan.blocked``
    counts the dropped pairs.
    """
    grid = state.mutable_grid()
    tgt = target.grid
    species = (SPECIES1,) if species_rule == "single" else (SPECIES1, SPECIES2)
    check_sufficient(state, target, species)
    pairs: list[tuple[Site, Site]] = []
    cost = 0.0
    for sp in species:
        vac, exc = vacancies_and_excess(grid, tgt, sp)
        if not vac:
            continue
        if len(exc) < len(vac):
            raise InsufficientAtomsError(f"species {sp}: {len(exc)} spare atoms for {len(vac)} vacancies")
        assignment = solve_lsap(build_cost_matrix(exc, vac, "euclidean"))
        cost += assignment.total_cost
        pairs.extend((exc[a], vac[t]) for t, a in assignment.pairs())
    if species_rule == "dual":
        try:
            pairs.extend(_evictions(grid, tgt, {src for src, _ in pairs}))
        except BlockedError:
            if not skip_blocked:
                raise

    virtual = grid
    pending = deque(pairs)
    paths: list[list[SingleMove]] = []
    carried: list[int] = []
    ordered: list[tuple[Site, Site]] = []
    blocked = 0
    while pending:
        # a dual-species vacancy may still hold the other species until its own pair leaves
        for _ in range(len(pending)):
            if virtual[pending[0][1]] == EMPTY:
                break
            pending.rotate(-1)
        else:
            if not skip_blocked:
                raise BlockedError("every remaining target is occupied by an atom that cannot leave first")
            blocked += len(pending)
            break
        src, dst = pending.popleft()
        direct = shortest_direct_path(virtual, src, dst, connectivity)
        try:
            segments = [direct] if direct is not None else domino_decompose(virtual, src, dst, species_rule, connectivity)
        except BlockedError:
            if not skip_blocked:
                raise
            blocked += 1
            continue
        ordered.append((src, dst))
        for seg in segments:
            carried.append(int(virtual[seg.steps[0].src]))
            for mv in seg.steps:
                apply_single(virtual, mv)
            paths.append(list(seg.steps))
    return PairPlan(ordered, paths, cost, carried, blocked)


def _evictions(grid: np.ndarray, tgt: np.ndarray, leaving: set[Site]) -> list[tuple[Site, Site]]:
    """Pairs moving atoms that squat on another species' target to free non-target sites.

    Without them a squatter whose own species has no vacancy would never leave.
    """
    squat = [
        Site(int(r), int(c))
        for r, c in np.argwhere((grid != EMPTY) & (tgt != 0) & (grid != tgt))
        if Site(int(r), int(c)) not in leaving
    ]
    if not squat:
        return []
    free = [Site(int(r), int(c)) for r, c in np.argwhere((grid == EMPTY) & (tgt == 0))]
    if len(free) < len(squat):
        raise BlockedError("no free site to move a misplaced atom to")
    assignment = solve_lsap(build_cost_matrix(free, squat, "euclidean"))
    return [(squat[t], free[a]) for t, a in assignment.pairs()]


def _program_from_singles(state: ArrayState, moves) -> MoveProgram:
    grid = state.mutable_grid()
    program = MoveProgram()
    for mv in moves:
        aod = combine_moves([mv])
        program.append(aod, apply_inplace(grid, aod))
    return program


def hungarian_plan(state: ArrayState, target: TargetPattern, connectivity: int = 8) -> MoveProgram:
    """Distance-optimal pairing, one AOD move per single-site step."""
    plan = plan_pairs(state, target, "single", connectivity)
    return _program_from_singles(state, (mv for path in plan.paths for mv in path))


def schedule_rounds(grid: np.ndarray, paths: list[list[SingleMove]], species: list[int]) -> list[list[SingleMove]]:
    """Advance all paths in lockstep rounds, executing them on ``grid`` in place.

    Each round looks at the next move of every unfinished path.  A move is
    kept when its source holds an atom of the path's species, its destination
    is empty, and neither site is already used by a kept move of the round;
    on a collision the move of the path with the most remaining steps wins
    and the others wait for a later round.  Kept moves touch disjoint sites,
    so a round can run in any order.  Scheduling stops early when a round
    keeps nothing; the caller then replans from the current array.
    """
    pos = [0] * len(paths)
    active = [pid for pid, path in enumerate(paths) if path]
    rounds: list[list[SingleMove]] = []
    while active:
        active.sort(key=lambda p: (pos[p] - len(paths[p]), p))
        used: set[Site] = set()
        kept = []
        for pid in active:
            mv = paths[pid][pos[pid]]
            if mv.src in used or mv.dst in used:
                continue
            if grid[mv.src] != species[pid] or grid[mv.dst] != EMPTY:
                continue
            kept.append(mv)
            used.update((mv.src, mv.dst))
            pos[pid] += 1
        if not kept:
            break
        for mv in kept:
            apply_single(grid, mv)
        rounds.append(kept)
        active = [p for p in active if pos[p] < len(paths[p])]
    return rounds


def _lockstep_plan(state: ArrayState, target: TargetPattern, species_rule: str, connectivity: int) -> MoveProgram:
    """Plan pairs and paths, run them in lockstep rounds, and replan whenever rounds stall.

    Dual-species planning works around blocked pairs for as long as any
    other pair can advance; if the target is still not reached it raises
    :class:`BlockedError` with the executed rounds attached as ``partial``.
    """
    grid = state.mutable_grid()
    rounds: list[list[SingleMove]] = []
    dual = species_rule == "dual"
    for _ in range(grid.size + 1):
        if matches_target(ArrayState(grid), target):
            return program_from_rounds(state, rounds)
        plan = plan_pairs(ArrayState(grid), target, species_rule, connectivity, skip_blocked=dual)
        done = schedule_rounds(grid, plan.paths, plan.species)
        if not done:
            if plan.blocked:
                err = BlockedError(f"{plan.blocked} pairs remain blocked by the other species")
                err.partial = program_from_rounds(state, rounds)
                raise err
            raise PlanningError("rounds made no progress")
        rounds.extend(done)
    raise PlanningError("replanning did not converge")


def _round_order(mv: SingleMove):
    return (mv.direction, mv.src.row, mv.src.col)


def program_from_rounds(state: ArrayState, rounds: list[list[SingleMove]]) -> MoveProgram:
    grid = state.mutable_grid()
    program = MoveProgram()
    for moves in rounds:
        for aod, picked in pack_moves(grid, sorted(moves, key=_round_order)):
            program.append(aod, picked)
    return program


def par_hungarian_plan(state: ArrayState, target: TargetPattern, connectivity: int = 8) -> MoveProgram:
    """Hungarian pairing and paths, with every path advancing in parallel rounds."""
    return _lockstep_plan(state, target, "single", connectivity)


def par_hungarian_dual_plan(state: ArrayState, target: TargetPattern, connectivity: int = 8) -> MoveProgram:
    """Species-selected pairing; opposite-species atoms are hard obstacles.

    Raises :class:`~atomsort.pathing.BlockedError` when a pair cannot be routed.
    """
    return _lockstep_plan(state, target, "dual", connectivity)
