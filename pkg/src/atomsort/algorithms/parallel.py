"""Greedy packing of single-atom moves into AOD moves."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import AodMove, ArrayState, NotCombinableError, SingleMove, Site, apply_inplace, combine_moves


def sequential_overlay(grid: np.ndarray, moves: Sequence[SingleMove]) -> dict[Site, int] | None:
    """Sites changed by applying ``moves`` one after another; None if one is invalid."""
    overlay: dict[Site, int] = {}
    for mv in moves:
        tag = overlay.get(mv.src, grid[mv.src])
        if not tag or overlay.get(mv.dst, grid[mv.dst]):
            return None
        overlay[mv.src] = 0
        overlay[mv.dst] = tag
    return overlay


def parallel_overlay(grid: np.ndarray, move: AodMove) -> tuple[dict[Site, int], set[Site]] | None:
    """Sites changed by ``move`` and the sites it picks up; None if it is invalid."""
    rows, cols = grid.shape
    picked = []
    for r, d in move.rows:
        for c, e in move.cols:
            tag = grid[r, c]
            if tag:
                picked.append((Site(r, c), Site(r + d, c + e), tag))
    sources = {src for src, _, _ in picked}
    overlay: dict[Site, int] = {src: 0 for src in sources}
    for _, dst, tag in picked:
        if not (0 <= dst.row < rows and 0 <= dst.col < cols):
            return None
        if grid[dst] and dst not in sources:
            return None
        if overlay.get(dst):
            return None
        overlay[dst] = int(tag)
    return overlay, sources


def equivalent(grid: np.ndarray, moves: Sequence[SingleMove], move: AodMove) -> bool:
    """True when ``move`` applied once equals applying ``moves`` in sequence.

    The parallel move must also pick up exactly the atoms of ``moves`` so no
    bystander is ever transported, even when the final occupancy would agree.
    """
    seq = sequential_overlay(grid, moves)
    par = parallel_overlay(grid, move)
    if seq is None or par is None:
        return False
    par_overlay, sources = par
    if sources != {mv.src for mv in moves}:
        return False
    for site in seq.keys() | par_overlay.keys():
        if seq.get(site, grid[site]) != par_overlay.get(site, grid[site]):
            return False
    return True


def pack_moves(grid: np.ndarray, moves: Sequence[SingleMove]) -> list[tuple[AodMove, list[Site]]]:
    """Greedily pack ``moves`` into AOD moves, applying each to ``grid`` in place.

    Moves are appended to the open candidate while the merged AOD move stays
    equivalent to sequential execution; the first move that breaks
    equivalence closes the candidate and opens the next one.
    """
    out: list[tuple[AodMove, list[Site]]] = []
    current: list[SingleMove] = []
    current_move: AodMove | None = None
    for mv in moves:
        if current:
            trial = current + [mv]
            try:
                merged = combine_moves(trial)
            except NotCombinableError:
                merged = None
            if merged is not None and equivalent(grid, trial, merged):
                current, current_move = trial, merged
                continue
            out.append((current_move, apply_inplace(grid, current_move)))
        current, current_move = [mv], combine_moves([mv])
    if current:
        out.append((current_move, apply_inplace(grid, current_move)))
    return out


def parallelize(moves: Sequence[SingleMove], state: ArrayState) -> list[AodMove]:
    """Split sequentially valid single moves into AOD moves.

    Replaying the result from ``state`` gives the same array as replaying
    ``moves`` one by one.
    """
    grid = state.mutable_grid()
    return [move for move, _ in pack_moves(grid, moves)]
