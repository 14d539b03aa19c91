"""Balance-and-Compact for rectangular single-species targets.

Balance moves atoms vertically inside their columns until every target row
holds at least as many atoms as the target is wide.  Which atom fills which
hole is a min-cost flow, since a column can give each row at most one atom.
All columns then advance together one site per step.  Compact then slides the atoms of each target row horizontally into the target
columns, one row at a time.  Every step moves whole sets of atoms of one row
or one column, so AOD moves typically carry many atoms.
"""

from __future__ import annotations

import networkx as nx
import numpy as np

from ..assignment import InsufficientAtomsError
from ..core import SPECIES1, SPECIES2, ArrayState, MoveProgram, PlanningError, SingleMove, Site, TargetPattern
from .parallel import pack_moves


class UnsupportedTargetError(PlanningError):
    """The planner cannot handle this target shape."""


def target_block(target: TargetPattern) -> tuple[int, int, int, int]:
    """(top, left, height, width) of a solid rectangular species-1 target."""
    if (target.grid == SPECIES2).any():
        raise UnsupportedTargetError("Balance-and-Compact handles single-species targets only")
    top, left, bottom, right = target.bounding_box()
    block = target.grid[top : bottom + 1, left : right + 1]
    if not (block == SPECIES1).all():
        raise UnsupportedTargetError("target is not a contiguous rectangular block")
    return top, left, bottom - top + 1, right - left + 1


def line_finals(positions: list[int], lo: int, width: int, size: int) -> list[int]:
    """Order-preserving final positions placing ``width`` atoms on ``lo..lo+width-1``.

    Atoms outside the chosen block are pushed just far enough aside to stay
    clear of it.  Among feasible blocks the one with the smallest largest
    displacement wins (first on ties).
    """
    k = len(positions)
    best = None
    j_lo, j_hi = max(0, k - (size - lo)), min(lo, k - width)
    for j in range(j_lo, j_hi + 1):
        finals = [0] * k
        for i in range(width):
            finals[j + i] = lo + i
        for i in range(j - 1, -1, -1):
            finals[i] = min(positions[i], finals[i + 1] - 1)
        for i in range(j + width, k):
            finals[i] = max(positions[i], finals[i - 1] + 1)
        cost = max(abs(f - p) for f, p in zip(finals, positions))
        if best is None or cost < best[0]:
            best = (cost, finals)
    if best is None:
        raise PlanningError("no feasible line compaction")
    return best[1]


def traffic_steps(positions: list[int], finals: list[int]) -> list[list[tuple[int, int]]]:
    """Unit steps moving ordered atoms on a line to ``finals`` without collisions.

    Each step lists ``(from, to)`` pairs in an order that is valid when applied
    one by one; every atom that can advance toward its final spot does.
    """
    pos = list(positions)
    steps = []
    while pos != finals:
        k = len(pos)
        new = list(pos)
        for i in range(k - 1, -1, -1):
            if finals[i] > pos[i] and (i == k - 1 or new[i + 1] > pos[i] + 1):
                new[i] = pos[i] + 1
        for i in range(k):
            if finals[i] < pos[i] and (i == 0 or new[i - 1] < pos[i] - 1):
                new[i] = pos[i] - 1
        if new == pos:
            raise PlanningError("line traffic stalled")
        right = [(pos[i], new[i]) for i in range(k - 1, -1, -1) if new[i] > pos[i]]
        left = [(pos[i], new[i]) for i in range(k) if new[i] < pos[i]]
        steps.append(right + left)
        pos = new
    return steps


class _Builder:
    def __init__(self, state: ArrayState):
        self.grid = state.mutable_grid()
        self.program = MoveProgram()

    def run(self, moves: list[SingleMove]) -> None:
        for aod, picked in pack_moves(self.grid, moves):
            self.program.append(aod, picked)


def column_quotas(grid: np.ndarray, top: int, height: int, width: int) -> dict[int, list[tuple[int, int]]] | None:
    """Per-column (source row, hole row) transfers giving every target row ``width`` atoms.

    Solved as a min-cost flow.  Supplies are atoms outside the target rows
    and surplus atoms of target rows holding more than ``width``; demands are
    the empty sites of deficient target rows.  A unit only flows inside its
    column, because balancing moves atoms vertically.  Edge cost is the row
    distance between the hole and the nearest usable supply in its column.
    Result maps column -> [(row, -1) for leaving atoms] + [(row, +1) for
    filled holes]; None when no column-respecting redistribution exists.
    """
    rows, cols = grid.shape
    rows_t = range(top, top + height)
    count = np.count_nonzero(grid[top : top + height], axis=1)
    deficit = {r: width - int(count[r - top]) for r in rows_t if count[r - top] < width}
    if not deficit:
        return {}
    surplus = {r: int(count[r - top]) - width for r in rows_t if count[r - top] > width}
    g = nx.DiGraph()
    need = sum(deficit.values())
    g.add_node("s", demand=-need)
    g.add_node("t", demand=need)
    for c in range(cols):
        occ = np.flatnonzero(grid[:, c])
        spare = [int(r) for r in occ if not top <= r < top + height]
        usable = spare + [int(r) for r in occ if int(r) in surplus]
        if not usable:
            continue
        if spare:
            g.add_edge("s", ("col", c), capacity=len(spare), weight=0)
        for r in usable:
            if r in surplus:
                g.add_edge(("row", r), ("col", c), capacity=1, weight=0)
        for r in deficit:
            if grid[r, c] == 0:
                dist = min(abs(r - u) for u in usable)
                g.add_edge(("col", c), ("hole", r), capacity=1, weight=dist)
    for r, s_ in surplus.items():
        g.add_edge("s", ("row", r), capacity=s_, weight=0)
    for r, d in deficit.items():
        g.add_edge(("hole", r), "t", capacity=d, weight=0)
    if nx.maximum_flow_value(g, "s", "t") < need:
        return None
    flow = nx.max_flow_min_cost(g, "s", "t")
    plans: dict[int, list[tuple[int, int]]] = {}
    for c in range(cols):
        node = ("col", c)
        holes = sorted(r for (_, r), f in flow.get(node, {}).items() if f)
        if not holes:
            continue
        donors = {r for r in surplus if flow.get(("row", r), {}).get(node)}
        spare = [int(r) for r in np.flatnonzero(grid[:, c]) if not top <= r < top + height]
        for h in holes[: len(holes) - len(donors)]:
            donors.add(min((u for u in spare if u not in donors), key=lambda u: (abs(u - h), u)))
        plans[c] = [(u, -1) for u in sorted(donors)] + [(h, 1) for h in holes]
    return plans


def _column_finals(grid: np.ndarray, c: int, changes: list[tuple[int, int]]) -> tuple[list[int], list[int]]:
    occ = [int(r) for r in np.flatnonzero(grid[:, c])]
    leave = {r for r, s in changes if s < 0}
    arrive = [r for r, s in changes if s > 0]
    finals = sorted([r for r in occ if r not in leave] + arrive)
    return occ, finals


def _balance(b: _Builder, top: int, height: int, width: int) -> None:
    plans = column_quotas(b.grid, top, height, width)
    if plans is None:
        raise PlanningError("no column-wise redistribution fills every target row")
    steps = {}
    for c, changes in plans.items():
        occ, finals = _column_finals(b.grid, c, changes)
        steps[c] = traffic_steps(occ, finals)
    depth = max((len(s) for s in steps.values()), default=0)
    for t in range(depth):
        up, down = [], []
        for c in sorted(steps):
            if t < len(steps[c]):
                for r, r2 in steps[c][t]:
                    (down if r2 > r else up).append(SingleMove(Site(r, c), Site(r2, c)))
        b.run(up + down)


def _compact(b: _Builder, top: int, left: int, height: int, width: int) -> None:
    cols = b.grid.shape[1]
    for r in range(top, top + height):
        positions = [int(c) for c in np.flatnonzero(b.grid[r])]
        finals = line_finals(positions, left, width, cols)
        for step in traffic_steps(positions, finals):
            b.run([SingleMove(Site(r, c), Site(r, c2)) for c, c2 in step])


def balance_compact_plan(state: ArrayState, target: TargetPattern) -> MoveProgram:
    if state.shape != target.shape:
        raise ValueError(f"shape mismatch: state {state.shape} vs target {target.shape}")
    top, left, height, width = target_block(target)
    if state.count(SPECIES2):
        raise UnsupportedTargetError("Balance-and-Compact handles single-species arrays only")
    if state.count() < height * width:
        raise InsufficientAtomsError(f"{state.count()} atoms for {height * width} target sites")
    b = _Builder(state)
    _balance(b, top, height, width)
    _compact(b, top, left, height, width)
    return b.program
