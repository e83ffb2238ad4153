"""Numerical laboratory for bilinear Strichartz and decoupling estimates on rescaled irrational tori."""

from .lattice import Annulus, Ball, RescaledTorus, TorusShape, lattice_indices, lattice_points, make_torus
from .wavefield import EXTENSION, PROPAGATOR, SpectralData, TimeCutoff, evolve, extend
from .weights import DECAY, INDICATOR, SpaceTimeRegion, WeightSpec

__version__ = "0.1.0"

__all__ = [
    "Annulus", "Ball", "RescaledTorus", "TorusShape", "lattice_indices", "lattice_points", "make_torus",
    "EXTENSION", "PROPAGATOR", "SpectralData", "TimeCutoff", "evolve", "extend",
    "DECAY", "INDICATOR", "SpaceTimeRegion", "WeightSpec",
]
