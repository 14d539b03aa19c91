"""Atom rearrangement planning and benchmarking for crossed-AOD tweezer arrays."""

from .core import (
    DONT_CARE,
    EMPTY,
    SPECIES1,
    SPECIES2,
    AodMove,
    ArrayState,
    MoveProgram,
    SingleMove,
    Site,
    TargetPattern,
    apply_move,
    combine_moves,
    is_valid_move,
    matches_target,
)

__version__ = "0.1.0"

__all__ = [
    "DONT_CARE",
    "EMPTY",
    "SPECIES1",
    "SPECIES2",
    "AodMove",
    "ArrayState",
    "MoveProgram",
    "SingleMove",
    "Site",
    "TargetPattern",
    "apply_move",
    "combine_moves",
    "is_valid_move",
    "matches_target",
]
