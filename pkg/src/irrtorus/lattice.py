"""Rescaled irrational tori and their dual frequency lattices.

A torus ``T x a_1 T x ... x a_{d-1} T`` dilated by ``lam`` has dual lattice
``(1/lam) (Z x (1/a_1) Z x ...)``.  Frequencies are carried as integer index
vectors ``m`` together with the torus, so ``k_i = m_i / (lam * a_i)`` is
rebuilt on demand and never accumulates representation drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

# relative slack used when deciding whether a boundary atom lies in a region
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class TorusShape:
    d: int
    alphas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"dimension must be >= 2, got {self.d}")
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            alphas = (1.0,) * (self.d - 1)
        if len(alphas) != self.d - 1:
            raise ValueError(f"need {self.d - 1} alphas for d={self.d}, got {len(alphas)}")
        for a in alphas:
            if not 0.5 <= a <= 1.0:
                raise ValueError(f"alpha={a} outside the admissible range [1/2, 1]")
        object.__setattr__(self, "alphas", alphas)

    @property
    def axis_factors(self) -> np.ndarray:
        """Side lengths of the unit-scale torus, ``(1, a_1, ..., a_{d-1})``."""
        return np.array((1.0,) + self.alphas)

    def rescaled(self, lam: float) -> "RescaledTorus":
        return RescaledTorus(self, lam)


@dataclass(frozen=True)
class RescaledTorus:
    shape: TorusShape
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def lengths(self) -> np.ndarray:
        """Spatial periods ``lam * (1, a_1, ...)``."""
        return self.lam * self.shape.axis_factors

    @property
    def measure(self) -> float:
        return float(self.lam ** self.d * np.prod(self.shape.alphas))

    def frequencies(self, indices: np.ndarray) -> np.ndarray:
        """Map integer index vectors (M, d) to lattice frequencies k."""
        return np.asarray(indices, dtype=float) / self.lengths

    def dilate(self, factor: float) -> "RescaledTorus":
        """Torus whose lattice is ``Lambda_{lam * factor}`` (no lower bound on the result)."""
        return _unchecked_torus(self.shape, self.lam * factor)


def _unchecked_torus(shape: TorusShape, lam: float) -> RescaledTorus:
    # parabolic rescaling legitimately produces lattices with lam < 1
    t = object.__new__(RescaledTorus)
    object.__setattr__(t, "shape", shape)
    object.__setattr__(t, "lam", float(lam))
    return t


@dataclass(frozen=True)
class Ball:
    radius: float
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("region radius must be positive")


@dataclass(frozen=True)
class Annulus:
    """``c1 * N < |k - center| <= c2 * N``."""

    N: float
    c1: float = 0.5
    c2: float = 2.0
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError("annulus scale must be positive")
        if not 0 <= self.c1 < self.c2:
            raise ValueError("annulus constants need 0 <= c1 < c2")

    @property
    def radius(self) -> float:
        return self.c2 * self.N


Region = Union[Ball, Annulus]


@dataclass(frozen=True)
class FrequencyAtom:
    index: tuple[int, ...]
    torus: RescaledTorus = field(repr=False)

    @property
    def value(self) -> np.ndarray:
        return self.torus.frequencies(np.array(self.index))

    @property
    def lift(self) -> np.ndarray:
        k = self.value
        return np.append(k, k @ k)


def _center(region: Region, d: int) -> np.ndarray:
    if region.center is None:
        return np.zeros(d)
    c = np.asarray(region.center, dtype=float)
    if c.shape != (d,):
        raise ValueError(f"region center must have {d} components")
    return c


def region_mask(torus: RescaledTorus, indices: np.ndarray, region: Region) -> np.ndarray:
    k = torus.frequencies(indices) - _center(region, torus.d)
    r = np.sqrt(np.sum(k * k, axis=-1))
    outer = region.radius * (1 + BOUNDARY_RTOL)
    mask = r <= outer
    if isinstance(region, Annulus):
        mask &= r > region.c1 * region.N * (1 + BOUNDARY_RTOL)
    return mask


def sort_indices(indices: np.ndarray) -> np.ndarray:
    """Lexicographic order on integer index rows."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, indices.shape[-1] if np.ndim(indices) > 1 else 1)
    if len(indices) == 0:
        return indices
    order = np.lexsort(indices.T[::-1])
    return indices[order]


def index_box(torus: RescaledTorus, region: Region) -> list[np.ndarray]:
    """Per-axis integer ranges guaranteed to contain every atom of the region."""
    c = _center(region, torus.d) * torus.lengths
    half = region.radius * torus.lengths
    return [np.arange(math.floor(ci - hi) - 1, math.ceil(ci + hi) + 2) for ci, hi in zip(c, half)]


def lattice_indices(torus: RescaledTorus, region: Region) -> np.ndarray:
    """Integer indices of the atoms of the lattice inside ``region``, sorted."""
    axes = index_box(torus, region)
    grids = np.meshgrid(*axes, indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)
    return sort_indices(cand[region_mask(torus, cand, region)].reshape(-1, torus.d))


def lattice_points(torus: RescaledTorus, region: Region) -> list[FrequencyAtom]:
    return [FrequencyAtom(tuple(int(v) for v in row), torus) for row in lattice_indices(torus, region)]


def lattice_spacing(torus: RescaledTorus) -> np.ndarray:
    return 1.0 / torus.lengths


def make_torus(d: int = 2, alphas: Sequence[float] = (), lam: float = 1.0) -> RescaledTorus:
    return RescaledTorus(TorusShape(d, tuple(alphas)), lam)
