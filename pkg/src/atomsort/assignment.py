"""Sum (LSAP) and bottleneck (LBAP) assignment of target sites to atoms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import PlanningError

METRICS = ("euclidean", "manhattan", "chebyshev")


class InsufficientAtomsError(PlanningError, ValueError):
    """Fewer atoms than sites that need filling."""


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Rows are target sites, columns are atoms; entries are site-unit distances."""

    values: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if values.shape[0] > values.shape[1]:
            raise InsufficientAtomsError(f"{values.shape[0]} targets but only {values.shape[1]} atoms")
        if values.size and (not np.isfinite(values).all() or (values < 0).any()):
            raise ValueError("cost entries must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Assignment:
    """``atom_of_target[k]`` is the column (atom) assigned to row (target) ``k``."""

    atom_of_target: tuple[int, ...]
    total_cost: float
    max_cost: float

    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.atom_of_target))


def distances(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    """Pairwise distances between row-vectors of integer coordinates."""
    diff = np.abs(a[:, None, :] - b[None, :, :]).astype(float)
    if metric == "euclidean":
        return np.sqrt((diff**2).sum(axis=-1))
    if metric == "manhattan":
        return diff.sum(axis=-1)
    if metric == "chebyshev":
        return diff.max(axis=-1)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def build_cost_matrix(sources: Sequence, targets: Sequence, metric: str = "euclidean") -> CostMatrix:
    if not sources or not targets:
        raise ValueError("need at least one source and one target")
    if len(sources) < len(targets):
        raise InsufficientAtomsError(f"{len(targets)} targets but only {len(sources)} atoms")
    src = np.asarray(sources, dtype=np.int64).reshape(-1, 2)
    tgt = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    return CostMatrix(distances(tgt, src, metric), metric)


def _as_values(c) -> np.ndarray:
    return c.values if isinstance(c, CostMatrix) else CostMatrix(c).values


def _assignment(values: np.ndarray, cols: np.ndarray) -> Assignment:
    picked = values[np.arange(len(cols)), cols] if len(cols) else np.zeros(0)
    return Assignment(
        tuple(int(c) for c in cols),
        float(picked.sum()),
        float(picked.max()) if len(cols) else 0.0,
    )


def solve_lsap(c: CostMatrix | np.ndarray) -> Assignment:
    """Minimum total-cost assignment of every row to a distinct column."""
    values = _as_values(c)
    if values.shape[0] == 0:
        return Assignment((), 0.0, 0.0)
    rows, cols = linear_sum_assignment(values)
    order = np.argsort(rows)
    return _assignment(values, cols[order])


def _perfect_matching(mask: np.ndarray) -> np.ndarray | None:
    """Columns matched to each row using only allowed entries, or None if some row stays unmatched."""
    match = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
    if (match < 0).any():
        return None
    return match


def solve_lbap(c: CostMatrix | np.ndarray) -> Assignment:
    """Assignment minimising the largest assigned entry.

    Binary search over the sorted distinct entries; a threshold is feasible
    when the matrix restricted to entries <= threshold has a matching that
    covers every row.
    """
    values = _as_values(c)
    if values.shape[0] == 0:
        return Assignment((), 0.0, 0.0)
    levels = np.unique(values)
    lo, hi = 0, len(levels) - 1
    best = _perfect_matching(values <= levels[hi])
    if best is None:
        raise InsufficientAtomsError("no complete assignment exists")
    while lo < hi:
        mid = (lo + hi) // 2
        match = _perfect_matching(values <= levels[mid])
        if match is None:
            lo = mid + 1
        else:
            hi, best = mid, match
    return _assignment(values, best)
