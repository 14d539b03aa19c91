from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atomsort.assignment import (
    CostMatrix,
    InsufficientAtomsError,
    build_cost_matrix,
    distances,
    solve_lbap,
    solve_lsap,
)


def brute(values: np.ndarray, reduce):
    n, m = values.shape
    return min(reduce(values[np.arange(n), list(p)]) for p in itertools.permutations(range(m), n))


costs = st.integers(1, 5).flatmap(
    lambda n: st.integers(n, 6).flatmap(
        lambda m: arrays(np.float64, (n, m), elements=st.integers(0, 20).map(float))
    )
)


@settings(max_examples=200, deadline=None)
@given(costs)
def test_lsap_matches_brute_force(values):
    result = solve_lsap(values)
    assert result.total_cost == pytest.approx(brute(values, np.sum))
    assert len(set(result.atom_of_target)) == values.shape[0]


@settings(max_examples=200, deadline=None)
@given(costs)
def test_lbap_matches_brute_force(values):
    result = solve_lbap(values)
    assert result.max_cost == pytest.approx(brute(values, np.max))
    assert len(set(result.atom_of_target)) == values.shape[0]


def test_lbap_beats_lsap_on_bottleneck():
    values = np.array([[0.0, 4.0], [4.0, 5.0]])
    assert solve_lsap(values).max_cost == 5.0
    assert solve_lbap(values).max_cost == 4.0


def test_metrics():
    a = np.array([[0, 0]])
    b = np.array([[3, 4]])
    assert distances(a, b, "euclidean")[0, 0] == 5.0
    assert distances(a, b, "manhattan")[0, 0] == 7.0
    assert distances(a, b, "chebyshev")[0, 0] == 4.0
    with pytest.raises(ValueError):
        distances(a, b, "hamming")


def test_cost_matrix_rows_are_targets():
    c = build_cost_matrix([(0, 0), (0, 3)], [(0, 1)], "manhattan")
    assert c.shape == (1, 2)
    assert c.values.tolist() == [[1.0, 2.0]]


def test_insufficient_atoms():
    with pytest.raises(InsufficientAtomsError):
        build_cost_matrix([(0, 0)], [(0, 1), (0, 2)])
    with pytest.raises(InsufficientAtomsError):
        CostMatrix(np.zeros((3, 2)))


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        CostMatrix(np.array([[-1.0]]))


def test_empty_assignment():
    assert solve_lsap(np.zeros((0, 3))).total_cost == 0.0
    assert solve_lbap(np.zeros((0, 3))).max_cost == 0.0
