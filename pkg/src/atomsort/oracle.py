"""Exact minimum AOD-move counts by breadth-first search, and bottleneck lower bounds.

States are bitmasks (one per species) over the row-major sites, so a whole
BFS layer is expanded against every structurally valid AOD move with numpy
array operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .assignment import InsufficientAtomsError, build_cost_matrix, solve_lbap
from .core import DONT_CARE, SPECIES1, SPECIES2, AodMove, ArrayState, MoveProgram, PlanningError, TargetPattern, apply_inplace
from .noise import NoiseParams

MAX_SITES_SINGLE = 12
MAX_SITES_DUAL = 8
# frontier x moves entries handled per numpy batch
_BATCH = 1 << 21


class InstanceTooLargeError(ValueError):
    """The instance exceeds the exhaustive-search caps."""


class UnreachableError(PlanningError):
    """No move sequence within the depth or state budget reaches the goal."""


@lru_cache(maxsize=None)
def tone_lists(size: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Every non-empty, in-bounds, non-crossing tone list for an axis of ``size`` sites."""
    out = []

    def extend(i: int, last: int, acc: list[tuple[int, int]]) -> None:
        if i == size:
            if acc:
                out.append(tuple(acc))
            return
        extend(i + 1, last, acc)
        for d in (-1, 0, 1):
            p = i + d
            if 0 <= p < size and p > last:
                acc.append((i, d))
                extend(i + 1, p, acc)
                acc.pop()

    extend(0, -2, [])
    return tuple(out)


@dataclass(frozen=True)
class MoveTable:
    """All AOD moves of an m x n grid as per-displacement-class bitmasks.

    ``masks[k, g]`` selects the intersections of move ``k`` whose atoms shift
    by ``shifts[g]`` bit positions.
    """

    rows: int
    cols: int
    moves: tuple[AodMove, ...]
    masks: np.ndarray
    shifts: np.ndarray


@lru_cache(maxsize=16)
def move_table(rows: int, cols: int) -> MoveTable:
    classes = [(d, e) for d in (-1, 0, 1) for e in (-1, 0, 1)]
    shifts = np.array([d * cols + e for d, e in classes], dtype=np.int64)
    row_lists, col_lists = tone_lists(rows), tone_lists(cols)

    def class_bits(tones):
        bits = np.zeros((len(tones), 3), dtype=np.int64)
        for k, tl in enumerate(tones):
            for idx, d in tl:
                bits[k, d + 1] |= 1 << idx
        return bits

    rb, cb = class_bits(row_lists), class_bits(col_lists)
    # expand row-index bitsets and column-index bitsets to site bitmasks
    row_site = np.zeros(1 << rows, dtype=np.int64)
    for bits in range(1 << rows):
        v = 0
        for r in range(rows):
            if bits >> r & 1:
                v |= ((1 << cols) - 1) << (r * cols)
        row_site[bits] = v
    col_site = np.zeros(1 << cols, dtype=np.int64)
    col_unit = sum(1 << (r * cols) for r in range(rows))
    for bits in range(1 << cols):
        v = 0
        for c in range(cols):
            if bits >> c & 1:
                v |= col_unit << c
        col_site[bits] = v
    n_moves = len(row_lists) * len(col_lists)
    masks = np.zeros((n_moves, 9), dtype=np.int64)
    for g, (d, e) in enumerate(classes):
        rs = row_site[rb[:, d + 1]]
        cs = col_site[cb[:, e + 1]]
        masks[:, g] = (rs[:, None] & cs[None, :]).reshape(-1)
    moves = tuple(AodMove(rl, cl) for rl in row_lists for cl in col_lists)
    return MoveTable(rows, cols, moves, masks, shifts)


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    return x << k if k >= 0 else x >> -k


def _encode(grid: np.ndarray, species: int) -> int:
    bits = (grid.reshape(-1) == species).nonzero()[0]
    return int(sum(1 << int(b) for b in bits))


def _expand(s1: np.ndarray, s2: np.ndarray, table: MoveTable, dual: bool):
    """Successors of frontier states (s1, s2) under every move.

    Returns (parent index, move index, new s1, new s2) for valid moves.
    """
    occ = s1 | s2
    picked = np.zeros((len(s1), len(table.moves)), dtype=np.int64)
    dest1 = np.zeros_like(picked)
    dest2 = np.zeros_like(picked) if dual else None
    for g in range(9):
        m = table.masks[None, :, g]
        k = int(table.shifts[g])
        p1 = s1[:, None] & m
        picked |= p1
        dest1 |= _shift(p1, k)
        if dual:
            p2 = s2[:, None] & m
            picked |= p2
            dest2 |= _shift(p2, k)
    stay = occ[:, None] & ~picked
    landed = dest1 | dest2 if dual else dest1
    ok = (picked != 0) & ((landed & stay) == 0)
    parent, move = np.nonzero(ok)
    n1 = (s1[parent] & ~picked[parent, move]) | dest1[parent, move]
    n2 = (s2[parent] & ~picked[parent, move]) | dest2[parent, move] if dual else np.zeros_like(n1)
    return parent, move, n1, n2


@dataclass(frozen=True)
class OracleResult:
    kstar: int
    witness: MoveProgram
    states_explored: int


def bfs_kstar(
    x0: ArrayState,
    g: TargetPattern,
    goal_mode: str = "subset",
    max_depth: int = 64,
    max_states: int = 2_000_000,
    max_sites: int | None = None,
) -> OracleResult:
    """Minimum number of AOD moves taking ``x0`` to a state matching ``g``.

    Searches over every structurally valid AOD move, deduplicating states by
    their occupancy encoding.  Raises :class:`UnreachableError` when the goal
    is not found within ``max_depth`` layers, and when the visited set would
    exceed ``max_states`` rather than truncating silently.
    """
    if x0.shape != g.shape:
        raise ValueError(f"shape mismatch: state {x0.shape} vs target {g.shape}")
    if goal_mode not in ("subset", "exact"):
        raise ValueError(f"unknown goal mode {goal_mode!r}")
    rows, cols = x0.shape
    dual = x0.is_dual or bool((g.grid == SPECIES2).any())
    cap = max_sites if max_sites is not None else (MAX_SITES_DUAL if dual else MAX_SITES_SINGLE)
    if rows * cols > cap:
        raise InstanceTooLargeError(f"{rows}x{cols} exceeds the {cap}-site cap for exhaustive search")
    t1, t2 = _encode(g.grid, SPECIES1), _encode(g.grid, SPECIES2)

    def goal(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
        if goal_mode == "exact":
            return (a1 == t1) & (a2 == t2)
        return ((a1 & t1) == t1) & ((a2 & t2) == t2)

    table = move_table(rows, cols)
    width = rows * cols
    s1 = np.array([_encode(x0.grid, SPECIES1)], dtype=np.int64)
    s2 = np.array([_encode(x0.grid, SPECIES2)], dtype=np.int64)
    start = int(s1[0]) | int(s2[0]) << width
    parents: dict[int, tuple[int, int]] = {start: (-1, -1)}
    found = start if goal(s1, s2)[0] else None
    depth = 0
    batch = max(1, _BATCH // max(1, len(table.moves)))
    while found is None:
        if depth >= max_depth or len(s1) == 0:
            raise UnreachableError(f"goal not reached within {depth} moves")
        depth += 1
        next1, next2 = [], []
        for lo in range(0, len(s1), batch):
            f1, f2 = s1[lo : lo + batch], s2[lo : lo + batch]
            parent, move, n1, n2 = _expand(f1, f2, table, dual)
            keys = n1 | (n2 << width)
            keys, first = np.unique(keys, return_index=True)
            for key, i in zip(keys.tolist(), first.tolist()):
                if key in parents:
                    continue
                pk = int(f1[parent[i]]) | int(f2[parent[i]]) << width
                parents[key] = (pk, int(move[i]))
                next1.append(int(n1[i]))
                next2.append(int(n2[i]))
            if len(parents) > max_states:
                raise UnreachableError(f"state budget of {max_states} exceeded at depth {depth}")
        s1 = np.array(next1, dtype=np.int64)
        s2 = np.array(next2, dtype=np.int64)
        hits = np.nonzero(goal(s1, s2))[0]
        if len(hits):
            found = int(s1[hits[0]]) | int(s2[hits[0]]) << width
    moves = []
    key = found
    while parents[key][0] != -1:
        key, k = parents[key]
        moves.append(table.moves[k])
    moves.reverse()
    grid = x0.mutable_grid()
    witness = MoveProgram()
    for mv in moves:
        witness.append(mv, apply_inplace(grid, mv))
    return OracleResult(len(moves), witness, len(parents))


PROTOCOLS = ("vacancies", "complete")


def d_minmax(
    state: ArrayState, target: TargetPattern, metric: str = "euclidean", protocol: str = "vacancies"
) -> float:
    """Bottleneck distance of the best assignment of atoms to target sites.

    ``vacancies`` matches each empty target site to a distinct atom outside
    the target, the protocol behind the Z* scaling bound.  ``complete``
    matches every target site, filled or not, to a distinct atom of its
    species; since one AOD move carries an atom one site, its Chebyshev value
    never exceeds the minimum move count, which the vacancy protocol can
    (two adjacent atoms shifted together by one move).  For two species the
    larger per-species value is returned.
    """
    if state.shape != target.shape:
        raise ValueError(f"shape mismatch: state {state.shape} vs target {target.shape}")
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    worst = 0.0
    for sp in (SPECIES1, SPECIES2):
        need = target.sites(sp)
        if not need:
            continue
        have = state.sites(sp)
        if len(have) < len(need):
            raise InsufficientAtomsError(f"species {sp}: {len(have)} atoms for {len(need)} target sites")
        if protocol == "vacancies":
            need = [s for s in need if state[s] != sp]
            have = [s for s in have if target[s] == DONT_CARE]
            if not need:
                continue
            if len(have) < len(need):
                raise InsufficientAtomsError(f"species {sp}: {len(have)} spare atoms for {len(need)} vacancies")
        worst = max(worst, solve_lbap(build_cost_matrix(have, need, metric)).max_cost)
    return worst


def lower_bound_time(
    state: ArrayState,
    target: TargetPattern,
    params: NoiseParams | None = None,
    metric: str = "euclidean",
    protocol: str = "vacancies",
) -> tuple[float, float]:
    """(t_LB, d_minmax) with t_LB = s * d_minmax / |v| in seconds."""
    params = params or NoiseParams()
    d = d_minmax(state, target, metric, protocol)
    return params.site_spacing * d / params.tweezer_speed, d
