"""InsideOut: layer-by-layer dual-species rearrangement.

The target region is peeled into concentric rectangular rings starting at its
centre.  For each ring, atoms of the wrong species are pushed outward (all
pushes on one edge packed into parallel AOD moves), then the ring's vacancies
are filled from atoms outside the finished rings.  Finished rings are never
touched again, so a blocked configuration can only form in the unfinished
outer region, where blocking atoms are shoved aside.
"""

from __future__ import annotations

import numpy as np

from ..assignment import build_cost_matrix, solve_lsap
from ..core import (
    DONT_CARE,
    EMPTY,
    SPECIES1,
    SPECIES2,
    AodMove,
    ArrayState,
    MoveProgram,
    PlanningError,
    SingleMove,
    Site,
    TargetPattern,
    apply_inplace,
    combine_moves,
)
from ..pathing import (
    BlockedError,
    NoRouteError,
    domino_decompose,
    route_with_fewest_blockers,
    shortest_direct_path,
    shove_route,
    shove_moves,
)
from .hungarian import check_sufficient
from .parallel import pack_moves

UP, RIGHT, DOWN, LEFT = (-1, 0), (0, 1), (1, 0), (0, -1)


def layer_coords(k: int, m: int, n: int) -> list[Site]:
    """Sites of the ``k``-th ring of an ``m`` x ``n`` grid, 0-based.

    Evaluates the ring parameterization in 1-based terms exactly as written:
    parity factors i = (n+1) mod 2, j = (m+1) mod 2, centre row
    floor(n/2) - i + 1, centre column floor(m/2) - j + 1.  Order is the top
    edge left to right, the right edge downward, the bottom edge right to
    left, then the left edge upward.  For non-square grids use
    :func:`layer_box`, which centres each axis on its own length.
    """
    if k < 1:
        raise ValueError("layer index starts at 1")
    i, j = (n + 1) % 2, (m + 1) % 2
    c_row, c_col = n // 2 - i + 1, m // 2 - j + 1
    top, left = c_row - (k - 1), c_col - (k - 1)
    bottom, right = c_row + (k - 1) + i, c_col + (k - 1) + j
    if top < 1 or left < 1 or bottom > m or right > n:
        raise ValueError(f"layer {k} does not fit in a {m}x{n} grid")
    return [Site(r - 1, c - 1) for r, c in _ring(top, left, bottom, right)]


def _ring(top: int, left: int, bottom: int, right: int) -> list[tuple[int, int]]:
    sites = [(top, c) for c in range(left, right + 1)]
    sites += [(r, right) for r in range(top + 1, bottom + 1)]
    if bottom > top:
        sites += [(bottom, c) for c in range(right - 1, left - 1, -1)]
    if right > left:
        sites += [(r, left) for r in range(bottom - 1, top, -1)]
    return sites


def layer_box(k: int, height: int, width: int) -> tuple[int, int, int, int]:
    """Unclipped 0-based (top, left, bottom, right) of ring ``k`` in a height x width region."""
    return (
        (height - 1) // 2 - (k - 1),
        (width - 1) // 2 - (k - 1),
        height // 2 + (k - 1),
        width // 2 + (k - 1),
    )


def layer_edges(k: int, height: int, width: int, origin: tuple[int, int] = (0, 0)) -> list[tuple[Site, tuple[int, int]]]:
    """Ring ``k`` of a region as (site, outward direction) pairs in ring order.

    Rings of non-square regions are clipped to the region; a site keeps the
    direction of the edge it sits on (top, then right, bottom, left).
    """
    top, left, bottom, right = layer_box(k, height, width)
    inner = layer_box(k - 1, height, width) if k > 1 else None
    out = []
    for r, c in _ring(top, left, bottom, right):
        if not (0 <= r < height and 0 <= c < width):
            continue
        if inner and inner[0] <= r <= inner[2] and inner[1] <= c <= inner[3]:
            continue
        if r == top:
            d = UP
        elif c == right:
            d = RIGHT
        elif r == bottom:
            d = DOWN
        else:
            d = LEFT
        out.append((Site(r + origin[0], c + origin[1]), d))
    return out


def layer_count(height: int, width: int) -> int:
    return (max(height, width) + 1) // 2


class _Planner:
    def __init__(self, state: ArrayState, target: TargetPattern, connectivity: int):
        self.grid = state.mutable_grid()
        self.target = target.grid
        self.rows, self.cols = self.grid.shape
        self.connectivity = connectivity
        self.program = MoveProgram()
        self.protected: set[Site] = set()
        # program length at which each layer was completed and frozen
        self.stage_ends: list[int] = []

    def _emit(self, mv: SingleMove) -> None:
        aod = combine_moves([mv])
        self.program.append(aod, apply_inplace(self.grid, aod))

    def _misplaced(self, site: Site) -> bool:
        want, have = self.target[site], self.grid[site]
        return want != DONT_CARE and have != EMPTY and have != want

    def _inside(self, r: int, c: int) -> bool:
        return 0 <= r < self.rows and 0 <= c < self.cols

    def _depths(self, site: Site, d: tuple[int, int]) -> set[int]:
        """Push depths L for which shifting the ``L + 1`` sites from ``site`` along ``d`` collides nowhere.

        The shifted segment is safe when its far end is empty, or when the
        site just beyond it is an empty in-bounds site.
        """
        out = set()
        for L in range(max(self.rows, self.cols)):
            r, c = site.row + L * d[0], site.col + L * d[1]
            if not self._inside(r, c):
                break
            if self.grid[r, c] == EMPTY or (self._inside(r + d[0], c + d[1]) and self.grid[r + d[0], c + d[1]] == EMPTY):
                out.add(L)
        return out

    def _edge_push(self, sites: list[Site], d: tuple[int, int]) -> list[Site]:
        """Push misplaced atoms of one edge outward by one site with as few AOD moves as possible.

        One move selects the edge line and the next ``L`` lines outward,
        crossed with the lines of the chosen atoms, so every atom on those
        segments shifts one site along ``d``.  Returns the atoms no depth frees.
        """
        depths = {s: self._depths(s, d) for s in sites}
        stuck = [s for s in sites if not depths[s]]
        todo = [s for s in sites if depths[s]]
        while todo:
            best = max(sorted(set().union(*(depths[s] for s in todo))), key=lambda L: sum(L in depths[s] for s in todo))
            group = [s for s in todo if best in depths[s]]
            todo = [s for s in todo if best not in depths[s]]
            if d[1] == 0:
                edge = group[0].row
                rows = tuple(sorted((edge + j * d[0], d[0]) for j in range(best + 1)))
                cols = tuple(sorted((s.col, 0) for s in group))
            else:
                edge = group[0].col
                rows = tuple(sorted((s.row, 0) for s in group))
                cols = tuple(sorted((edge + j * d[1], d[1]) for j in range(best + 1)))
            aod = AodMove(rows, cols)
            self.program.append(aod, apply_inplace(self.grid, aod))
        return stuck

    def _clear(self, edges: list[tuple[Site, tuple[int, int]]], layer: set[Site]) -> None:
        for direction in (UP, RIGHT, DOWN, LEFT):
            sites = [s for s, d in edges if d == direction and self._misplaced(s)]
            for site in self._edge_push(sites, direction):
                if self._misplaced(site):
                    out = Site(site.row + direction[0], site.col + direction[1])
                    try:
                        self._shove(site, self.protected | layer, layer, first=[out])
                    except NoRouteError:
                        pass  # no room yet; filling frees sites outside, retried next pass

    def _vacancies(self, layer: set[Site], exclude=()) -> dict[Site, int]:
        return {s: int(self.target[s]) for s in layer if self.grid[s] == EMPTY and s not in exclude}

    def _shove(self, site: Site, avoid: set[Site], layer: set[Site], first=None, exclude=(), loose=False) -> None:
        """Push ``site`` one step along a route ending at a free site.

        Free sites outside ``avoid`` are preferred.  In a crowded array the
        route may instead end on a vacancy of the current layer, provided the
        atom entering it is the species the vacancy wants; with ``loose`` any
        atom may enter, to be cleared again once filling has freed space.
        """
        route = None
        if first is not None:
            route = shove_route(self.grid, site, avoid, self.connectivity, first)
        if route is None:
            route = shove_route(self.grid, site, avoid, self.connectivity)
        if route is None:
            entries = self._vacancies(layer, exclude)
            route = shove_route(self.grid, site, avoid, self.connectivity, entries=entries)
            if route is None and loose:
                route = shove_route(self.grid, site, avoid, self.connectivity, entries=dict.fromkeys(entries))
        if route is None:
            raise NoRouteError(f"no free site to push {site} into")
        for aod, picked in pack_moves(self.grid, shove_moves(self.grid, route)):
            self.program.append(aod, picked)

    def _route(self, src: Site, dst: Site, layer: set[Site]) -> None:
        for _ in range(self.rows * self.cols):
            direct = shortest_direct_path(self.grid, src, dst, self.connectivity, self.protected)
            try:
                segments = [direct] if direct is not None else domino_decompose(
                    self.grid, src, dst, "dual", self.connectivity, self.protected
                )
            except BlockedError:
                self._clear_blockers(src, dst, layer)
                continue
            for seg in segments:
                for mv in seg.steps:
                    self._emit(mv)
            return
        raise PlanningError(f"could not route {src} -> {dst}")

    def _clear_blockers(self, src: Site, dst: Site, layer: set[Site]) -> None:
        route = route_with_fewest_blockers(self.grid, src, dst, self.connectivity, self.protected, layer)
        if route is None:
            raise NoRouteError(f"{dst} unreachable from {src}")
        species = self.grid[src]
        blockers = [s for s in route if self.grid[s] not in (EMPTY, species)]
        self._shove(blockers[0], self.protected | layer | set(route), layer, exclude=set(route), loose=True)

    def _fill(self, layer: set[Site]) -> None:
        while True:
            vac = {
                sp: [s for s in sorted(layer) if self.target[s] == sp and self.grid[s] == EMPTY]
                for sp in (SPECIES1, SPECIES2)
            }
            if not vac[SPECIES1] and not vac[SPECIES2]:
                return
            plan = []
            for sp in (SPECIES1, SPECIES2):
                if not vac[sp]:
                    continue
                sources = [
                    Site(int(r), int(c))
                    for r, c in np.argwhere(self.grid == sp)
                    if Site(int(r), int(c)) not in self.protected
                    and not (Site(int(r), int(c)) in layer and self.target[r, c] == sp)
                ]
                if len(sources) < len(vac[sp]):
                    raise PlanningError(f"species {sp}: reservoir exhausted")
                assignment = solve_lsap(build_cost_matrix(sources, vac[sp], "euclidean"))
                plan.extend((sp, sources[a], vac[sp][t]) for t, a in assignment.pairs())
            for sp, src, dst in plan:
                if self.grid[src] != sp or self.grid[dst] != EMPTY:
                    break  # an earlier fill disturbed this pair; reassign
                self._route(src, dst, layer)

    def _unfinished(self, layer: set[Site]) -> bool:
        return any(self._misplaced(s) or (self.target[s] != DONT_CARE and self.grid[s] == EMPTY) for s in layer)

    def run(self) -> MoveProgram:
        if not (self.target != DONT_CARE).any():
            return self.program
        top, left, bottom, right = TargetPattern(self.target).bounding_box()
        height, width = bottom - top + 1, right - left + 1
        for k in range(1, layer_count(height, width) + 1):
            edges = layer_edges(k, height, width, (top, left))
            layer = {s for s, _ in edges}
            self._fill(layer)
            for _ in range(len(layer) + 1):
                if not self._unfinished(layer):
                    break
                self._clear(edges, layer)
                self._fill(layer)
            else:
                raise PlanningError(f"layer {k} incomplete")
            self.protected |= layer
            self.stage_ends.append(len(self.program))
        return self.program


def inside_out_plan(state: ArrayState, target: TargetPattern, connectivity: int = 8) -> MoveProgram:
    check_sufficient(state, target)
    return _Planner(state, target, connectivity).run()
