"""Frequency-space decompositions: caps, (v, v^2)-plates, strips, and parabolic rescaling."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import RescaledTorus, _unchecked_torus
from .wavefield import SpectralData
from .weights import SpaceTimeRegion

# shrink applied to the cap diameter when each cap must hold at most one atom
SINGLE_ATOM_SHRINK = 0.99


@dataclass(frozen=True)
class Cap:
    center: tuple[float, ...]
    radius: float

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        return np.sqrt(np.sum(p * p, axis=-1)) <= self.radius * (1 + tol)

    def lift(self) -> np.ndarray:
        c = np.asarray(self.center)
        return np.append(c, c @ c)


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned frequency box ``prod [lower_i, upper_i]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        slack = tol * np.maximum(self.extents, 1.0)
        return np.all((p >= np.asarray(self.lower) - slack) & (p <= np.asarray(self.upper) + slack), axis=-1)


@dataclass(frozen=True)
class Plate(Box):
    """Box with half-width ``long_radius`` on all axes but ``short_axis``."""

    long_radius: float = 0.0
    short_radius: float = 0.0
    short_axis: int = -1

    def projected_extents(self) -> np.ndarray:
        """Side lengths of the image under projection to the frequency axes."""
        return self.extents


def cover_with_caps(radius: float, delta: float, center=None, d: int = 2,
                    single_atom: bool = False) -> list[Cap]:
    """Cover the ball ``|xi - center| <= radius`` with caps of radius ``delta``.

    Centers sit on the cubic grid of spacing ``2 r / sqrt(d)``, whose cells
    are inscribed in the caps, so the cover is exhaustive and each point lies
    in at most ``2^d`` caps.  With ``single_atom`` the cap diameter becomes
    ``0.99 delta``.
    """
    if not delta > 0:
        raise ValueError("cap radius must be positive")
    if not radius > 0:
        raise ValueError("region radius must be positive")
    c0 = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    d = len(c0)
    r = SINGLE_ATOM_SHRINK * delta / 2 if single_atom else delta
    if r >= radius:
        return [Cap(tuple(c0), r)]
    s = 2 * r / math.sqrt(d)
    jmax = int(math.ceil(radius / s + 0.5))
    caps = []
    for j in itertools.product(range(-jmax, jmax + 1), repeat=d):
        cc = np.asarray(j) * s
        # nearest point of the grid cell to the ball center
        near = np.clip(np.zeros(d), cc - s / 2, cc + s / 2)
        if np.linalg.norm(near) <= radius * (1 + 1e-12):
            caps.append(Cap(tuple(c0 + cc), r))
    return caps


def assign_to_pieces(points: np.ndarray, pieces) -> np.ndarray:
    """Index of the containing piece for each point, preferring the nearest center.

    Returns -1 for uncovered points.  The assignment is a partition.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.array([np.asarray(p.center, dtype=float) for p in pieces])
    inside = np.stack([p.contains(points) for p in pieces], axis=1)
    dist = np.sqrt(((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1))
    dist = np.where(inside, dist, np.inf)
    out = np.argmin(dist, axis=1)
    out[~np.any(inside, axis=1)] = -1
    return out


def split_by_pieces(data: SpectralData, pieces) -> list[SpectralData]:
    """Restrict ``data`` to each piece of a partition of its atoms."""
    label = assign_to_pieces(data.frequencies, pieces) if len(data) else np.zeros(0, dtype=int)
    if np.any(label < 0):
        raise ValueError("some atoms are not covered by the pieces")
    return [data.restrict(label == j) for j in range(len(pieces))]


def cap_atoms(data: SpectralData, caps) -> list[SpectralData]:
    """Per-cap restrictions, dropping empty caps."""
    return [p for p in split_by_pieces(data, caps) if len(p)]


def cover_cap_with_plates(cap: Cap, short_axis: int = -1) -> list[Plate]:
    """Slice a cap of radius ``v`` into slabs of thickness ``2 v^2`` along one axis."""
    v = cap.radius
    c = np.asarray(cap.center, dtype=float)
    d = len(c)
    ax = short_axis % d
    if v >= 1:
        return [Plate(tuple(c - v), tuple(c + v), v, v, ax)]
    count = int(math.ceil(1 / v - 1e-12))
    edges = np.linspace(c[ax] - v, c[ax] + v, count + 1)
    plates = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        lower, upper = c - v, c + v
        lower[ax], upper[ax] = lo, hi
        plates.append(Plate(tuple(lower), tuple(upper), v, (hi - lo) / 2, ax))
    return plates


@dataclass
class StripPartition:
    parent: Box
    K: int
    strips: list[Box] = field(repr=False)
    long_axis: int = 0

    @property
    def adjacency(self) -> np.ndarray:
        i = np.arange(self.K)
        return np.abs(i[:, None] - i[None, :]) <= 1

    def nonadjacent_pairs(self, gap: int = 2) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.K) for j in range(i + 1, self.K) if j - i >= gap]

    def transversal_pairs(self) -> list[tuple[int, int]]:
        return self.nonadjacent_pairs(gap=10)


def make_strips(parent: Box, K: int, long_axis: int = 0) -> StripPartition:
    """Cut ``parent`` into ``K`` congruent strips along ``long_axis``."""
    if K < 2:
        raise ValueError("need at least two strips")
    lo, hi = np.asarray(parent.lower, dtype=float), np.asarray(parent.upper, dtype=float)
    edges = np.linspace(lo[long_axis], hi[long_axis], K + 1)
    strips = []
    for a, b in zip(edges[:-1], edges[1:]):
        l, u = lo.copy(), hi.copy()
        l[long_axis], u[long_axis] = a, b
        strips.append(Box(tuple(l), tuple(u)))
    return StripPartition(parent, K, strips, long_axis)


def parent_plate(center, N1: float, N2: float, d: int = 2, short_axis: int = -1) -> Plate:
    """The ``(N2/N1, (N2/N1)^2)`` plate that strips subdivide."""
    r = N2 / N1
    c = np.asarray(center, dtype=float)
    lower, upper = c - r, c + r
    ax = short_axis % d
    lower[ax], upper[ax] = c[ax] - r * r, c[ax] + r * r
    return Plate(tuple(lower), tuple(upper), r, r * r, ax)


# ---------------------------------------------------------------- rescaling

@dataclass(frozen=True)
class RescaleMap:
    """``E f(x, t) = phase(x, t) * E g(r (x + 2 c t), r^2 t)``."""

    r: float
    center: tuple[float, ...]

    def forward(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.asarray(t, dtype=float)
        c = np.asarray(self.center)
        return self.r * (x + 2 * np.outer(t, c)), self.r ** 2 * t

    def phase(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.asarray(self.center)
        return np.exp(-2j * np.pi * (x @ c + (c @ c) * np.asarray(t, dtype=float)))

    def region(self, D: SpaceTimeRegion) -> SpaceTimeRegion:
        """Image of a box; only defined for a centered cap (pure dilation)."""
        if np.any(np.asarray(self.center) != 0):
            raise ValueError("a shifted cap maps boxes to sheared boxes")
        r = self.r
        t0, t1 = D.t_range
        return SpaceTimeRegion((r * r * t0, r * r * t1), tuple(r * np.asarray(D.lower)),
                               tuple(r * np.asarray(D.upper)), D.kind)

    def measure_factor(self, d: int) -> float:
        return self.r ** (d + 2)

    def cap(self, cap: Cap) -> Cap:
        c = (np.asarray(cap.center) - np.asarray(self.center)) / self.r
        return Cap(tuple(c), cap.radius / self.r)


def parabolic_rescale(data: SpectralData, center_index, r: float) -> tuple[SpectralData, RescaleMap]:
    """Send the cap of radius ``r`` around a lattice atom to unit scale.

    Atoms ``xi = c + r eta`` become atoms ``eta`` of the lattice relabelled
    with ``lam * r``; amplitudes are unchanged.
    """
    if not r > 0:
        raise ValueError("cap radius must be positive")
    torus = data.torus
    mc = np.asarray(center_index, dtype=np.int64).reshape(torus.d)
    c = torus.frequencies(mc)
    if len(data):
        dist = np.sqrt(np.sum((data.frequencies - c) ** 2, axis=-1))
        if np.any(dist > r * (1 + 1e-12)):
            raise ValueError("data is not supported in the cap")
    new_torus: RescaledTorus = _unchecked_torus(torus.shape, torus.lam * r)
    g = SpectralData(new_torus, data.indices - mc, data.coeffs)
    return g, RescaleMap(r, tuple(c))
