"""Directed polymers on hierarchical diamond lattices with edge disorder.

Deterministic variance and moment recursions, nested critical scaling
schedules, pool Monte Carlo for the normalized partition function and
quenched/annealed free-energy gap estimates.
"""

__version__ = "0.1.0"

from .lattice import LatticeParams
from .disorder import DisorderModel, parse_disorder
from .variance_map import MapParams, ScalingSchedule

__all__ = [
    "LatticeParams",
    "DisorderModel",
    "parse_disorder",
    "MapParams",
    "ScalingSchedule",
]
