"""Grid state and crossed-AOD move semantics.

An :class:`AodMove` selects a set of row tones and a set of column tones, each
with a displacement in {-1, 0, +1}.  Every occupied site at an intersection of
a selected row and a selected column is picked up and displaced by the
(row, column) displacement of its tones.  Tones keep their ordering, so two
picked atoms can never land on the same site.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

EMPTY = 0
SPECIES1 = 1
SPECIES2 = 2
DONT_CARE = 0

_TEXT_CODES = {".": 0, "_": 0, "0": 0, "1": 1, "A": 1, "a": 1, "2": 2, "B": 2, "b": 2}
_TEXT_CHARS = ".12"


class PlanningError(RuntimeError):
    """A planner could not produce a program for the given instance."""


class InvalidMoveError(ValueError):
    """Raised when a move cannot be applied to a state."""


class NotCombinableError(ValueError):
    """Raised when single-atom moves cannot be merged into one AOD move."""


class Site(NamedTuple):
    row: int
    col: int


def _grid_from_text(text: str | Sequence[str]) -> np.ndarray:
    lines = text.split() if isinstance(text, str) else list(text)
    if not lines:
        raise ValueError("empty grid text")
    try:
        data = [[_TEXT_CODES[ch] for ch in line] for line in lines]
    except KeyError as exc:
        raise ValueError(f"unknown grid character {exc.args[0]!r}") from None
    if len({len(r) for r in data}) != 1:
        raise ValueError("ragged grid text")
    return np.array(data, dtype=np.int8)


def _frozen_grid(grid, allowed: tuple[int, ...]) -> np.ndarray:
    arr = np.array(grid, dtype=np.int8, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grid must be a non-empty 2-D array, got shape {arr.shape}")
    bad = ~np.isin(arr, allowed)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(f"invalid tag {arr[r, c]} at ({r}, {c})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ArrayState:
    """Occupancy of an m x n tweezer array.

    ``grid[r, c]`` is 0 for an empty site, 1 for species 1 and 2 for species 2.
    The grid is copied on construction and kept read-only.
    """

    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen_grid(self.grid, (0, 1, 2)))

    @classmethod
    def empty(cls, rows: int, cols: int) -> ArrayState:
        return cls(np.zeros((rows, cols), dtype=np.int8))

    @classmethod
    def from_sites(cls, rows: int, cols: int, sites: Iterable, species: int = SPECIES1) -> ArrayState:
        grid = np.zeros((rows, cols), dtype=np.int8)
        for r, c in sites:
            grid[r, c] = species
        return cls(grid)

    @classmethod
    def from_text(cls, text: str | Sequence[str]) -> ArrayState:
        """Parse rows like ``"1.2"``; ``.`` is empty, ``1``/``A`` and ``2``/``B`` are species."""
        return cls(_grid_from_text(text))

    @property
    def rows(self) -> int:
        return self.grid.shape[0]

    @property
    def cols(self) -> int:
        return self.grid.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def is_dual(self) -> bool:
        return bool((self.grid == SPECIES2).any())

    def __getitem__(self, site) -> int:
        return int(self.grid[site[0], site[1]])

    def count(self, species: int | None = None) -> int:
        if species is None:
            return int(np.count_nonzero(self.grid))
        return int(np.count_nonzero(self.grid == species))

    def sites(self, species: int | None = None) -> list[Site]:
        """Occupied sites in row-major order, optionally of one species."""
        mask = self.grid != EMPTY if species is None else self.grid == species
        return [Site(int(r), int(c)) for r, c in np.argwhere(mask)]

    def mutable_grid(self) -> np.ndarray:
        return np.array(self.grid, copy=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArrayState):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self) -> int:
        return hash((self.grid.shape, self.grid.tobytes()))

    def __repr__(self) -> str:
        return f"ArrayState({self.rows}x{self.cols}, atoms={self.count()})"

    def to_text(self) -> str:
        return "\n".join("".join(_TEXT_CHARS[v] for v in row) for row in self.grid.tolist())

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "grid": self.grid.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> ArrayState:
        state = cls(np.array(data["grid"], dtype=np.int8))
        if state.shape != (data["rows"], data["cols"]):
            raise ValueError("grid does not match declared rows/cols")
        return state

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ArrayState:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class TargetPattern:
    """Desired occupancy: 0 = don't care, 1 / 2 = site must hold that species."""

    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen_grid(self.grid, (0, 1, 2)))

    @classmethod
    def from_sites(cls, rows: int, cols: int, sites: Iterable, species: int = SPECIES1) -> TargetPattern:
        grid = np.zeros((rows, cols), dtype=np.int8)
        for r, c in sites:
            grid[r, c] = species
        return cls(grid)

    @classmethod
    def from_text(cls, text: str | Sequence[str]) -> TargetPattern:
        return cls(_grid_from_text(text))

    @property
    def rows(self) -> int:
        return self.grid.shape[0]

    @property
    def cols(self) -> int:
        return self.grid.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def __getitem__(self, site) -> int:
        return int(self.grid[site[0], site[1]])

    def count(self, species: int | None = None) -> int:
        if species is None:
            return int(np.count_nonzero(self.grid))
        return int(np.count_nonzero(self.grid == species))

    def sites(self, species: int | None = None) -> list[Site]:
        mask = self.grid != DONT_CARE if species is None else self.grid == species
        return [Site(int(r), int(c)) for r, c in np.argwhere(mask)]

    def bounding_box(self) -> tuple[int, int, int, int]:
        """(top, left, bottom, right), inclusive, of the demanded sites."""
        idx = np.argwhere(self.grid != DONT_CARE)
        if len(idx) == 0:
            raise ValueError("target demands no sites")
        (top, left), (bottom, right) = idx.min(axis=0), idx.max(axis=0)
        return int(top), int(left), int(bottom), int(right)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TargetPattern):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self) -> int:
        return hash((self.grid.shape, self.grid.tobytes()))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "grid": self.grid.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> TargetPattern:
        target = cls(np.array(data["grid"], dtype=np.int8))
        if target.shape != (data["rows"], data["cols"]):
            raise ValueError("grid does not match declared rows/cols")
        return target


def _check_tones(tones, axis: str) -> tuple[tuple[int, int], ...]:
    out = tuple((int(i), int(d)) for i, d in tones)
    if not out:
        raise ValueError(f"an AOD move needs at least one {axis} tone")
    for i, d in out:
        if d not in (-1, 0, 1):
            raise ValueError(f"{axis} tone {i} has displacement {d}, expected -1, 0 or +1")
    for (i0, d0), (i1, d1) in zip(out, out[1:]):
        if i1 <= i0:
            raise ValueError(f"{axis} tones must be strictly increasing, got {i0} then {i1}")
        if i1 + d1 <= i0 + d0:
            raise ValueError(f"{axis} tones {i0} and {i1} would cross")
    return out


@dataclass(frozen=True)
class AodMove:
    """One crossed-AOD operation: ``rows``/``cols`` are ``(index, displacement)`` tones."""

    rows: tuple[tuple[int, int], ...]
    cols: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", _check_tones(self.rows, "row"))
        object.__setattr__(self, "cols", _check_tones(self.cols, "column"))

    @property
    def is_identity(self) -> bool:
        return all(d == 0 for _, d in self.rows) and all(e == 0 for _, e in self.cols)

    def intersections(self) -> Iterator[tuple[Site, Site]]:
        """All (source, destination) pairs addressed by the tone grid."""
        for r, d in self.rows:
            for c, e in self.cols:
                yield Site(r, c), Site(r + d, c + e)

    def negated(self) -> AodMove:
        """The move that undoes this one (tones placed at their post-move positions)."""
        return AodMove(tuple((r + d, -d) for r, d in self.rows), tuple((c + e, -e) for c, e in self.cols))

    def to_dict(self) -> dict:
        return {"rows": [list(t) for t in self.rows], "cols": [list(t) for t in self.cols]}

    @classmethod
    def from_dict(cls, data: dict) -> AodMove:
        return cls(tuple(map(tuple, data["rows"])), tuple(map(tuple, data["cols"])))


@dataclass(frozen=True)
class SingleMove:
    """Displacement of one atom to a neighbouring site (Chebyshev distance 1)."""

    src: Site
    dst: Site

    def __post_init__(self):
        src, dst = Site(*map(int, self.src)), Site(*map(int, self.dst))
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        if src == dst or abs(src.row - dst.row) > 1 or abs(src.col - dst.col) > 1:
            raise ValueError(f"{src} -> {dst} is not a unit move")

    @property
    def direction(self) -> tuple[int, int]:
        return self.dst.row - self.src.row, self.dst.col - self.src.col

    @property
    def is_diagonal(self) -> bool:
        dr, dc = self.direction
        return dr != 0 and dc != 0


@dataclass
class MoveProgram:
    """Ordered AOD moves plus the sites picked up by each move when it was applied."""

    moves: list[AodMove] = field(default_factory=list)
    picked: list[tuple[Site, ...]] = field(default_factory=list)

    def append(self, move: AodMove, picked: Sequence[Site]) -> None:
        self.moves.append(move)
        self.picked.append(tuple(Site(*p) for p in picked))

    def extend(self, other: MoveProgram) -> None:
        for move, picked in zip(other.moves, other.picked):
            self.append(move, picked)

    def __len__(self) -> int:
        return len(self.moves)

    def __iter__(self) -> Iterator[AodMove]:
        return iter(self.moves)

    def to_dict(self, times: Sequence[float] | None = None) -> dict:
        entries = []
        for i, (move, picked) in enumerate(zip(self.moves, self.picked)):
            entry = move.to_dict()
            entry["picked"] = [list(p) for p in picked]
            if times is not None:
                entry["time_s"] = times[i]
            entries.append(entry)
        return {"moves": entries}

    @classmethod
    def from_dict(cls, data: dict) -> MoveProgram:
        program = cls()
        for entry in data["moves"]:
            program.append(AodMove.from_dict(entry), [tuple(p) for p in entry.get("picked", [])])
        return program


def _pickup(grid: np.ndarray, move: AodMove) -> tuple[str | None, list[tuple[int, int, int, int, int]]]:
    """Return (violation, [(r, c, r2, c2, tag), ...]) without touching ``grid``."""
    m, n = grid.shape
    for r, d in move.rows:
        if not (0 <= r < m and 0 <= r + d < m):
            return f"row tone {r}{d:+d} out of bounds", []
    for c, e in move.cols:
        if not (0 <= c < n and 0 <= c + e < n):
            return f"column tone {c}{e:+d} out of bounds", []
    picked = []
    for r, d in move.rows:
        row = grid[r]
        for c, e in move.cols:
            tag = row[c]
            if tag:
                picked.append((r, c, r + d, c + e, int(tag)))
    if not picked:
        return "empty pickup: no atom at any tone intersection", picked
    return None, picked


def _landing_violation(grid: np.ndarray, picked) -> str | None:
    sources = {(r, c) for r, c, _, _, _ in picked}
    dests = set()
    for r, c, r2, c2, _ in picked:
        if not (0 <= r2 < grid.shape[0] and 0 <= c2 < grid.shape[1]):
            return f"atom at ({r}, {c}) would leave the array"
        if grid[r2, c2] and (r2, c2) not in sources:
            return f"collision: ({r}, {c}) -> ({r2}, {c2}) lands on an unpicked atom"
        if (r2, c2) in dests:
            return f"two atoms would land on ({r2}, {c2})"
        dests.add((r2, c2))
    return None


def move_violation(state: ArrayState | np.ndarray, move: AodMove) -> str | None:
    """Reason ``move`` is invalid against ``state``, or ``None`` when it is valid."""
    grid = state.grid if isinstance(state, ArrayState) else state
    reason, picked = _pickup(grid, move)
    if reason is not None:
        return reason
    return _landing_violation(grid, picked)


def is_valid_move(state: ArrayState, move: AodMove) -> bool:
    return move_violation(state, move) is None


def apply_inplace(grid: np.ndarray, move: AodMove, allow_empty: bool = False) -> list[Site]:
    """Apply ``move`` to a mutable grid; returns the picked source sites.

    With ``allow_empty`` an empty pickup is a no-op instead of an error, which
    is what open-loop replay needs after atoms have been lost.
    """
    reason, picked = _pickup(grid, move)
    if reason is not None:
        if allow_empty and not picked and reason.startswith("empty pickup"):
            return []
        raise InvalidMoveError(reason)
    reason = _landing_violation(grid, picked)
    if reason is not None:
        raise InvalidMoveError(reason)
    for r, c, _, _, _ in picked:
        grid[r, c] = EMPTY
    for _, _, r2, c2, tag in picked:
        grid[r2, c2] = tag
    return [Site(r, c) for r, c, _, _, _ in picked]


def apply_move(state: ArrayState, move: AodMove) -> tuple[ArrayState, list[Site]]:
    grid = state.mutable_grid()
    picked = apply_inplace(grid, move)
    return ArrayState(grid), picked


def apply_single(grid: np.ndarray, move: SingleMove) -> None:
    """Sequentially apply one single-atom move to a mutable grid."""
    (r, c), (r2, c2) = move.src, move.dst
    if not grid[r, c]:
        raise InvalidMoveError(f"no atom at {move.src}")
    if grid[r2, c2]:
        raise InvalidMoveError(f"destination {move.dst} is occupied")
    grid[r2, c2] = grid[r, c]
    grid[r, c] = EMPTY


def combine_moves(moves: Sequence[SingleMove]) -> AodMove:
    """Smallest AOD move whose tones cover all ``moves``.

    Raises :class:`NotCombinableError` when a row or column would need two
    different displacements, or when the resulting tones would cross.
    """
    if not moves:
        raise ValueError("nothing to combine")
    row_d: dict[int, int] = {}
    col_d: dict[int, int] = {}
    for mv in moves:
        dr, dc = mv.direction
        if row_d.setdefault(mv.src.row, dr) != dr:
            raise NotCombinableError(f"row {mv.src.row} needs displacements {row_d[mv.src.row]} and {dr}")
        if col_d.setdefault(mv.src.col, dc) != dc:
            raise NotCombinableError(f"column {mv.src.col} needs displacements {col_d[mv.src.col]} and {dc}")
    try:
        return AodMove(tuple(sorted(row_d.items())), tuple(sorted(col_d.items())))
    except ValueError as exc:
        raise NotCombinableError(str(exc)) from None


def matches_target(state: ArrayState, target: TargetPattern, mode: str = "subset") -> bool:
    """Subset mode: every demanded site holds its species. Exact mode also needs
    every don't-care site to be empty."""
    if state.shape != target.shape:
        raise ValueError(f"shape mismatch: state {state.shape} vs target {target.shape}")
    demanded = target.grid != DONT_CARE
    if not np.array_equal(state.grid[demanded], target.grid[demanded]):
        return False
    if mode == "subset":
        return True
    if mode == "exact":
        return not state.grid[~demanded].any()
    raise ValueError(f"unknown match mode {mode!r}")


def replay(state: ArrayState, moves: Iterable[AodMove]) -> tuple[ArrayState, MoveProgram]:
    """Apply moves in order, recording pickups. Raises on the first invalid move."""
    grid = state.mutable_grid()
    program = MoveProgram()
    for i, move in enumerate(moves):
        try:
            picked = apply_inplace(grid, move)
        except InvalidMoveError as exc:
            raise InvalidMoveError(f"move {i}: {exc}") from None
        program.append(move, picked)
    return ArrayState(grid), program
