from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from atomsort.core import ArrayState, TargetPattern


def random_instance(rng: np.random.Generator, rows: int, cols: int, dual: bool = False, fill: float = 0.6):
    """Random state and a random target the state has enough atoms for."""
    while True:
        u = rng.random((rows, cols))
        if dual:
            grid = np.where(u < fill / 2, 1, np.where(u < fill, 2, 0))
        else:
            grid = np.where(u < fill, 1, 0)
        state = ArrayState(grid.astype(np.int8))
        n1, n2 = state.count(1), state.count(2)
        if n1 + n2 == 0:
            continue
        sites = rng.permutation(rows * cols)
        tgt = np.zeros(rows * cols, dtype=np.int8)
        k1 = int(rng.integers(0, n1 + 1))
        k2 = int(rng.integers(0, n2 + 1)) if dual else 0
        if k1 + k2 == 0:
            continue
        tgt[sites[:k1]] = 1
        tgt[sites[k1 : k1 + k2]] = 2
        return state, TargetPattern(tgt.reshape(rows, cols))


@st.composite
def grids(draw, max_rows=6, max_cols=6, species=(0, 1)):
    rows = draw(st.integers(1, max_rows))
    cols = draw(st.integers(1, max_cols))
    cells = draw(st.lists(st.sampled_from(species), min_size=rows * cols, max_size=rows * cols))
    return np.array(cells, dtype=np.int8).reshape(rows, cols)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
