"""Rearrangement planners and their registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..core import ArrayState, MoveProgram, TargetPattern
from .balance_compact import UnsupportedTargetError, balance_compact_plan
from .hungarian import hungarian_plan, par_hungarian_dual_plan, par_hungarian_plan
from .inside_out import inside_out_plan, layer_coords
from .parallel import pack_moves, parallelize


@dataclass(frozen=True)
class Rearranger:
    name: str
    species: str  # "single", "dual" or "both"
    plan: Callable[[ArrayState, TargetPattern], MoveProgram]


REGISTRY: dict[str, Rearranger] = {
    r.name: r
    for r in (
        Rearranger("hungarian", "single", hungarian_plan),
        Rearranger("par_hungarian", "single", par_hungarian_plan),
        Rearranger("balance_compact", "single", balance_compact_plan),
        Rearranger("par_hungarian_dual", "dual", par_hungarian_dual_plan),
        Rearranger("inside_out", "dual", inside_out_plan),
    )
}


class UnknownAlgorithmError(KeyError):
    pass


def get_rearranger(name: str) -> Rearranger:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownAlgorithmError(f"unknown algorithm {name!r}; choose from {', '.join(REGISTRY)}") from None


__all__ = [
    "REGISTRY",
    "Rearranger",
    "UnknownAlgorithmError",
    "UnsupportedTargetError",
    "balance_compact_plan",
    "get_rearranger",
    "hungarian_plan",
    "inside_out_plan",
    "layer_coords",
    "pack_moves",
    "par_hungarian_dual_plan",
    "par_hungarian_plan",
    "parallelize",
]
