"""Grid path search for moving one atom to its assigned site.

Routes are searched breadth-first on the 8-connected grid by default (diagonal
AOD moves are allowed); ``connectivity=4`` restricts to axis moves.  Among
equal-length routes the first found wins, with neighbours expanded in the
order: row steps, column steps, diagonals.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import EMPTY, ArrayState, PlanningError, SingleMove, Site


class RoutingError(PlanningError):
    pass


class BlockedError(RoutingError):
    """Every route to the destination crosses an atom of the other species.

    A planner that keeps working around blocked pairs attaches the moves it
    did make as ``partial``.
    """

    partial = None


class NoRouteError(RoutingError):
    """No route exists even when all atoms are treated as passable."""


_STEPS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_STEPS_8 = _STEPS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


@lru_cache(maxsize=64)
def neighbour_table(rows: int, cols: int, connectivity: int = 8) -> tuple[tuple[int, ...], ...]:
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    steps = _STEPS_8 if connectivity == 8 else _STEPS_4
    table = []
    for r in range(rows):
        for c in range(cols):
            table.append(
                tuple((r + dr) * cols + c + dc for dr, dc in steps if 0 <= r + dr < rows and 0 <= c + dc < cols)
            )
    return tuple(table)


@dataclass(frozen=True)
class Path:
    steps: tuple[SingleMove, ...]
    kind: str = "direct"

    def __post_init__(self):
        for a, b in zip(self.steps, self.steps[1:]):
            if a.dst != b.src:
                raise ValueError(f"path steps do not chain: {a} then {b}")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def sites(self) -> list[Site]:
        if not self.steps:
            return []
        return [self.steps[0].src] + [s.dst for s in self.steps]


def path_from_sites(sites: Sequence[Site], kind: str = "direct") -> Path:
    return Path(tuple(SingleMove(a, b) for a, b in zip(sites, sites[1:])), kind)


def _flat(grid: np.ndarray) -> list[int]:
    return grid.ravel().tolist()


def bfs_route(passable: Sequence[bool], rows: int, cols: int, src: int, dst: int, connectivity: int = 8) -> list[int] | None:
    """Shortest route of flat indices from ``src`` to ``dst`` through passable cells.

    ``src`` is always allowed; ``dst`` must be passable.
    """
    if src == dst:
        return [src]
    if not passable[dst]:
        return None
    nbrs = neighbour_table(rows, cols, connectivity)
    parent = {src: -1}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v in parent or not passable[v]:
                continue
            parent[v] = u
            if v == dst:
                route = [v]
                while u != -1:
                    route.append(u)
                    u = parent[u]
                return route[::-1]
            queue.append(v)
    return None


def _to_sites(route: Iterable[int], cols: int) -> list[Site]:
    return [Site(i // cols, i % cols) for i in route]


def _grid_of(state) -> np.ndarray:
    return state.grid if isinstance(state, ArrayState) else state


def _forbid(passable: list[bool], forbidden, cols: int) -> None:
    if forbidden:
        for r, c in forbidden:
            passable[r * cols + c] = False


def shortest_direct_path(
    state,
    src: Site,
    dst: Site,
    connectivity: int = 8,
    forbidden: Iterable[Site] | None = None,
) -> Path | None:
    """Minimum-length route through empty sites only; ``None`` when none exists."""
    grid = _grid_of(state)
    rows, cols = grid.shape
    if not grid[src]:
        raise ValueError(f"source {tuple(src)} is empty")
    if grid[dst]:
        raise ValueError(f"destination {tuple(dst)} is occupied")
    passable = [v == EMPTY for v in _flat(grid)]
    _forbid(passable, forbidden, cols)
    route = bfs_route(passable, rows, cols, src[0] * cols + src[1], dst[0] * cols + dst[1], connectivity)
    if route is None:
        return None
    return path_from_sites(_to_sites(route, cols), "direct")


def _species_route(grid, src, dst, species_rule, connectivity, forbidden):
    rows, cols = grid.shape
    flat = _flat(grid)
    species = flat[src[0] * cols + src[1]]
    if species_rule == "single":
        passable = [True] * len(flat)
    elif species_rule == "dual":
        passable = [v == EMPTY or v == species for v in flat]
    else:
        raise ValueError(f"unknown species rule {species_rule!r}")
    _forbid(passable, forbidden, cols)
    s, d = src[0] * cols + src[1], dst[0] * cols + dst[1]
    return bfs_route(passable, rows, cols, s, d, connectivity), flat


def detect_blocked(state, src: Site, dst: Site, connectivity: int = 8, forbidden: Iterable[Site] | None = None) -> bool:
    """True when every route from ``src`` to ``dst`` crosses an opposite-species atom."""
    grid = _grid_of(state)
    route, _ = _species_route(grid, src, dst, "dual", connectivity, forbidden)
    return route is None


def domino_decompose(
    state,
    src: Site,
    dst: Site,
    species_rule: str = "single",
    connectivity: int = 8,
    forbidden: Iterable[Site] | None = None,
) -> list[Path]:
    """Split a route cluttered with same-species atoms into executable segments.

    The route is the shortest one on which same-species atoms are passable.
    Segments are returned in execution order: the last obstacle moves to
    ``dst`` first, every earlier obstacle then steps into the slot vacated by
    the next one, and finally the source atom moves to the first obstacle's
    slot.  Along each segment every intermediate site is empty when it runs.
    """
    grid = _grid_of(state)
    rows, cols = grid.shape
    if not grid[src]:
        raise ValueError(f"source {tuple(src)} is empty")
    if grid[dst]:
        raise ValueError(f"destination {tuple(dst)} is occupied")
    forbidden = list(forbidden) if forbidden else None
    route, flat = _species_route(grid, src, dst, species_rule, connectivity, forbidden)
    if route is None:
        if species_rule == "dual":
            anyroute, _ = _species_route(grid, src, dst, "single", connectivity, forbidden)
            if anyroute is not None:
                raise BlockedError(f"route {tuple(src)} -> {tuple(dst)} is blocked by the other species")
        raise NoRouteError(f"no route {tuple(src)} -> {tuple(dst)}")
    sites = _to_sites(route, cols)
    stops = [0] + [i for i in range(1, len(route) - 1) if flat[route[i]] != EMPTY] + [len(route) - 1]
    if len(stops) == 2:
        return [path_from_sites(sites, "direct")]
    segments = []
    for a, b in zip(stops[-2::-1], stops[:0:-1]):
        segments.append(path_from_sites(sites[a : b + 1], "domino"))
    return segments


def route_with_fewest_blockers(
    state,
    src: Site,
    dst: Site,
    connectivity: int = 8,
    forbidden: Iterable[Site] | None = None,
    unclearable: Iterable[Site] | None = None,
) -> list[Site] | None:
    """Route from ``src`` to ``dst`` crossing as few opposite-species atoms as possible.

    0-1 breadth-first search: stepping onto an opposite-species atom costs 1,
    anything else costs 0.  ``forbidden`` sites are never entered and
    ``unclearable`` sites are impassable when they hold the other species.
    """
    grid = _grid_of(state)
    rows, cols = grid.shape
    flat = _flat(grid)
    s, d = src[0] * cols + src[1], dst[0] * cols + dst[1]
    species = flat[s]
    blocked = [False] * len(flat)
    if forbidden:
        for r, c in forbidden:
            blocked[r * cols + c] = True
    if unclearable:
        for r, c in unclearable:
            i = r * cols + c
            if flat[i] != EMPTY and flat[i] != species:
                blocked[i] = True
    if blocked[d]:
        return None
    nbrs = neighbour_table(rows, cols, connectivity)
    inf = len(flat) + 1
    dist = [inf] * len(flat)
    parent = [-1] * len(flat)
    dist[s] = 0
    dq = deque([s])
    while dq:
        u = dq.popleft()
        if u == d:
            break
        for v in nbrs[u]:
            if blocked[v]:
                continue
            w = 1 if flat[v] != EMPTY and flat[v] != species else 0
            nd = dist[u] + w
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                if w:
                    dq.append(v)
                else:
                    dq.appendleft(v)
    if dist[d] == inf:
        return None
    route = [d]
    while route[-1] != s:
        route.append(parent[route[-1]])
    return _to_sites(route[::-1], cols)


def route_to_nearest_empty(
    state,
    start: Site,
    forbidden: Iterable[Site] | None = None,
    connectivity: int = 8,
    first_steps: Sequence[Site] | None = None,
    entries: Mapping[Site, int] | None = None,
) -> list[Site] | None:
    """Shortest route from ``start`` (occupied) to the nearest empty site.

    Any site may be crossed except ``forbidden`` ones.  When ``first_steps`` is
    given the route must leave ``start`` through one of those sites.
    ``entries`` maps extra empty end sites, forbidden or not, to the species
    that must be the atom stepping into them.
    """
    grid = _grid_of(state)
    rows, cols = grid.shape
    flat = _flat(grid)
    s = start[0] * cols + start[1]
    blocked = [False] * len(flat)
    if forbidden:
        for r, c in forbidden:
            blocked[r * cols + c] = True
    blocked[s] = True
    ends = {r * cols + c: sp for (r, c), sp in (entries or {}).items() if flat[r * cols + c] == EMPTY}
    nbrs = neighbour_table(rows, cols, connectivity)
    parent: dict[int, int] = {}

    def finish(v: int) -> list[Site]:
        route = [v]
        while route[-1] != s:
            route.append(parent[route[-1]])
        return _to_sites(route[::-1], cols)

    allowed = None if first_steps is None else {r * cols + c for r, c in first_steps}
    queue: deque[int] = deque([s])
    while queue:
        u = queue.popleft()
        if u != s and flat[u] == EMPTY:
            return finish(u)
        for v in nbrs[u]:
            if u == s and allowed is not None and v not in allowed:
                continue
            if v in parent or v == s:
                continue
            if v in ends and flat[u] == ends[v]:
                parent[v] = u
                return finish(v)
            if blocked[v]:
                continue
            parent[v] = u
            queue.append(v)
    return None


def shove_route(
    state,
    start: Site,
    forbidden: Iterable[Site] | None = None,
    connectivity: int = 8,
    first_steps: Sequence[Site] | None = None,
    entries: Mapping[Site, int] | None = None,
) -> list[Site] | None:
    """Like :func:`route_to_nearest_empty`, minimizing straight segments before length.

    A shove along one row or column runs as a single AOD move, so routes
    with fewer turns are cheaper to execute.  Diagonal steps count as a
    segment each, since a diagonal run cannot be shifted in one move.
    """
    grid = _grid_of(state)
    rows, cols = grid.shape
    flat = _flat(grid)
    s = start[0] * cols + start[1]
    blocked = [False] * len(flat)
    for r, c in forbidden or ():
        blocked[r * cols + c] = True
    ends = {r * cols + c: sp for (r, c), sp in (entries or {}).items() if flat[r * cols + c] == EMPTY}
    allowed = None if first_steps is None else {r * cols + c for r, c in first_steps}
    nbrs = neighbour_table(rows, cols, connectivity)
    best: dict[tuple[int, int], tuple[int, int]] = {}
    parent: dict[tuple[int, int], tuple[int, int] | None] = {(s, 0): None}
    heap = [(0, 0, s, 0)]
    while heap:
        turns, length, u, d = heapq.heappop(heap)
        if best.get((u, d), (turns, length)) < (turns, length):
            continue
        if u != s and flat[u] == EMPTY:
            key = (u, d)
            route = []
            while key is not None:
                route.append(key[0])
                key = parent[key]
            return _to_sites(route[::-1], cols)
        for v in nbrs[u]:
            if u == s and allowed is not None and v not in allowed:
                continue
            if v == s:
                continue
            e = v - u
            if not (v in ends and ends[v] in (None, flat[u])) and blocked[v]:
                continue
            straight = abs(e) == 1 or abs(e) == cols
            cost = (turns + (0 if straight and e == d else 1), length + 1)
            if cost < best.get((v, e), (1 << 30, 0)):
                best[(v, e)] = cost
                parent[(v, e)] = (u, d)
                heapq.heappush(heap, (*cost, v, e))
    return None


def shove_moves(grid: np.ndarray, route: Sequence[Site]) -> list[SingleMove]:
    """Single moves that advance every atom on ``route`` one step toward its empty end.

    Species are irrelevant: each atom only moves onto the next route site,
    which is empty by the time it moves.
    """
    moves = []
    for i in range(len(route) - 2, -1, -1):
        if grid[route[i]]:
            moves.append(SingleMove(route[i], route[i + 1]))
    return moves
