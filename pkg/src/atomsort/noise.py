"""Stochastic loading, atom loss, and the simulated-time model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import EMPTY, SPECIES1, SPECIES2, AodMove, ArrayState, Site, apply_inplace

VACUUM_LOSS = "vacuum"
HANDOFF_LOSS = "handoff"


@dataclass(frozen=True)
class NoiseParams:
    """Loading and loss parameters; lengths in metres, times in seconds."""

    p_load: float = 0.6
    vacuum_lifetime: float = math.inf
    p_handoff: float = 0.0
    site_spacing: float = 5e-6
    tweezer_speed: float = 0.1
    settle_time: float = 100e-6

    def __post_init__(self):
        for name in ("p_load", "p_handoff"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        for name in ("vacuum_lifetime", "site_spacing", "tweezer_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.settle_time < 0:
            raise ValueError("settle_time must be non-negative")

    @property
    def noiseless(self) -> bool:
        return self.p_handoff == 0 and math.isinf(self.vacuum_lifetime)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> NoiseParams:
        return cls(**{k: math.inf if v is None else float(v) for k, v in data.items()})


@dataclass(frozen=True)
class LossEvent:
    kind: str
    site: Site
    move_index: int
    time: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "site": list(self.site), "move_index": self.move_index, "time": self.time}


def survival_probability(t: float, t_v: float, n_atoms: int = 1) -> float:
    """Probability that all ``n_atoms`` survive a time ``t``: exp(-N t / t_v)."""
    if t < 0 or n_atoms < 0 or not t_v > 0:
        raise ValueError("need t >= 0, n_atoms >= 0 and t_v > 0")
    return math.exp(-n_atoms * t / t_v)


def load_array(rows: int, cols: int, params: NoiseParams, rng: np.random.Generator, dual: bool = False) -> ArrayState:
    """Occupy each site independently with probability ``p_load``.

    Dual arrays split the loaded sites evenly between the species in
    expectation: species 1 with probability p/2, species 2 with p/2.
    """
    u = rng.random((rows, cols))
    p = params.p_load
    if dual:
        grid = np.where(u < p / 2, SPECIES1, np.where(u < p, SPECIES2, EMPTY))
    else:
        grid = np.where(u < p, SPECIES1, EMPTY)
    return ArrayState(grid.astype(np.int8))


def move_duration(move: AodMove, params: NoiseParams, picked: list[Site] | None = None) -> float:
    """Settle time plus one site of travel, longer by sqrt(2) when an atom moves diagonally.

    ``picked`` restricts the diagonal check to tones that actually carry an
    atom; without it every intersection counts.
    """
    hop = params.site_spacing / params.tweezer_speed
    rows = {r: d for r, d in move.rows}
    cols = {c: e for c, e in move.cols}
    if picked is None:
        diagonal = any(d for d in rows.values()) and any(e for e in cols.values())
    else:
        diagonal = any(rows[r] and cols[c] for r, c in picked)
    return params.settle_time + hop * (math.sqrt(2) if diagonal else 1.0)


def step_noise(
    grid: np.ndarray,
    move: AodMove,
    elapsed: float | None,
    params: NoiseParams,
    rng: np.random.Generator,
    move_index: int = 0,
    clock: float = 0.0,
) -> tuple[list[Site], list[LossEvent], float]:
    """Apply ``move`` to ``grid`` in place, then draw handoff and vacuum losses.

    Picked atoms are lost with ``p_handoff`` each (checked in pickup order);
    then every remaining atom is lost with ``1 - exp(-elapsed / t_v)``
    (row-major order).  ``elapsed=None`` uses :func:`move_duration` of the
    atoms actually carried.  An empty pickup, possible after earlier losses,
    is a no-op.  Returns the picked source sites, the loss events, and the
    elapsed time.
    """
    picked = apply_inplace(grid, move, allow_empty=True)
    if elapsed is None:
        elapsed = move_duration(move, params, picked)
    events: list[LossEvent] = []
    when = clock + elapsed
    if params.p_handoff > 0 and picked:
        dest = dict(move.rows), dict(move.cols)
        draws = rng.random(len(picked))
        for (r, c), u in zip(picked, draws):
            if u < params.p_handoff:
                site = Site(r + dest[0][r], c + dest[1][c])
                grid[site] = EMPTY
                events.append(LossEvent(HANDOFF_LOSS, site, move_index, when))
    if not math.isinf(params.vacuum_lifetime):
        p_loss = -math.expm1(-elapsed / params.vacuum_lifetime)
        occupied = np.argwhere(grid != EMPTY)
        draws = rng.random(len(occupied))
        for (r, c) in occupied[draws < p_loss]:
            site = Site(int(r), int(c))
            grid[site] = EMPTY
            events.append(LossEvent(VACUUM_LOSS, site, move_index, when))
    return picked, events, elapsed


def reload_reservoir(
    grid: np.ndarray, target: np.ndarray, params: NoiseParams, rng: np.random.Generator, dual: bool = False
) -> None:
    """Reload empty sites outside the target region, for multi-round protocols."""
    u = rng.random(grid.shape)
    free = (grid == EMPTY) & (target == 0)
    p = params.p_load
    if dual:
        fresh = np.where(u < p / 2, SPECIES1, np.where(u < p, SPECIES2, EMPTY))
    else:
        fresh = np.where(u < p, SPECIES1, EMPTY)
    grid[free] = fresh[free]


__all__ = [
    "HANDOFF_LOSS",
    "VACUUM_LOSS",
    "LossEvent",
    "NoiseParams",
    "load_array",
    "move_duration",
    "reload_reservoir",
    "step_noise",
    "survival_probability",
]
