"""Free Schroedinger waves and extension-operator sums over lattice atoms.

Two conventions live side by side:

* propagator on the rescaled torus,
  ``U(t)phi(x) = lam^{-d/2} sum_k c_k exp(2 pi i k.x - i |2 pi k|^2 t)``
* extension of atomic data on the paraboloid,
  ``Ef(x, t) = sum_xi c_xi exp(-2 pi i (xi.x + |xi|^2 t))``

Both are exact finite sums.  The direct path sums over atoms in sorted order;
the grid path evaluates whole spatial slices with an inverse DFT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.fft

from .lattice import RescaledTorus, sort_indices

PROPAGATOR = "propagator"
EXTENSION = "extension"


@dataclass(frozen=True)
class SpectralData:
    """Complex amplitudes attached to atoms of a frequency lattice."""

    torus: RescaledTorus
    indices: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.torus.d)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if len(idx) != len(c):
            raise ValueError("indices and coefficients differ in length")
        if len(idx):
            order = np.lexsort(idx.T[::-1])
            idx, c = idx[order], c[order]
            if np.any(np.all(np.diff(idx, axis=0) == 0, axis=1)):
                raise ValueError("duplicate atoms in spectral data")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        idx.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_mapping(cls, torus: RescaledTorus, mapping: dict) -> "SpectralData":
        if not mapping:
            return cls.empty(torus)
        keys = sort_indices(np.array(list(mapping.keys()), dtype=np.int64))
        return cls(torus, keys, np.array([mapping[tuple(int(v) for v in k)] for k in keys]))

    @classmethod
    def empty(cls, torus: RescaledTorus) -> "SpectralData":
        return cls(torus, np.zeros((0, torus.d), dtype=np.int64), np.zeros(0, dtype=complex))

    def __len__(self):
        return len(self.coeffs)

    @property
    def d(self) -> int:
        return self.torus.d

    @property
    def frequencies(self) -> np.ndarray:
        return self.torus.frequencies(self.indices)

    @property
    def l2(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def function_norm(self) -> float:
        """``||phi||_{L^2(T_lam)}`` for the propagator normalization."""
        return float(np.sqrt(np.prod(self.torus.shape.alphas)) * self.l2)

    def as_mapping(self) -> dict:
        return {tuple(int(v) for v in row): complex(c) for row, c in zip(self.indices, self.coeffs)}

    def with_coeffs(self, coeffs) -> "SpectralData":
        return SpectralData(self.torus, self.indices, coeffs)

    def scaled(self, factor: complex) -> "SpectralData":
        return self.with_coeffs(self.coeffs * factor)

    def restrict(self, mask) -> "SpectralData":
        mask = np.asarray(mask, dtype=bool)
        return SpectralData(self.torus, self.indices[mask], self.coeffs[mask])

    def __add__(self, other: "SpectralData") -> "SpectralData":
        if other.torus != self.torus:
            raise ValueError("cannot add spectral data on different lattices")
        merged = self.as_mapping()
        for k, v in other.as_mapping().items():
            merged[k] = merged.get(k, 0) + v
        return SpectralData.from_mapping(self.torus, merged)

    def index_spread(self) -> np.ndarray:
        """Per-axis ``max m - min m`` (zero for empty or single-atom data)."""
        if len(self) == 0:
            return np.zeros(self.d, dtype=np.int64)
        return self.indices.max(axis=0) - self.indices.min(axis=0)


def kind_constants(data: SpectralData, kind: str):
    """Return (spatial sign, prefactor, angular time frequencies) for a wave kind."""
    k = data.frequencies
    k2 = np.sum(k * k, axis=-1)
    if kind == PROPAGATOR:
        return 1, data.torus.lam ** (-data.d / 2), (2 * np.pi) ** 2 * k2
    if kind == EXTENSION:
        return -1, 1.0, 2 * np.pi * k2
    raise ValueError(f"unknown wave kind {kind!r}")


def _direct_sum(data: SpectralData, kind: str, x, t) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
    if x.shape[-1] != data.d:
        raise ValueError(f"points must have {data.d} spatial coordinates")
    if len(data) == 0:
        return np.zeros(len(x), dtype=complex)
    sign, pref, omega = kind_constants(data, kind)
    phase = sign * 2 * np.pi * (x @ data.frequencies.T) - np.outer(t, omega)
    # summation runs along a contiguous axis in sorted atom order
    return pref * np.sum(np.exp(1j * phase) * data.coeffs, axis=-1)


def evolve(data: SpectralData, x, t) -> np.ndarray:
    """Free evolution ``U(t) phi`` at the points ``(x[i], t[i])``."""
    return _direct_sum(data, PROPAGATOR, x, t)


def extend(data: SpectralData, x, t) -> np.ndarray:
    """Extension operator ``E`` at the points ``(x[i], t[i])``."""
    return _direct_sum(data, EXTENSION, x, t)


@dataclass(frozen=True)
class TimeCutoff:
    """Temporal cutoff supported in ``[0, 1]``.

    ``sharp`` is the indicator; ``bump`` is ``exp(1 - 1/(1 - s^2))`` in the
    rescaled variable ``s = (2 t - 1) / width`` with ``width <= 1``.
    """

    kind: str = "sharp"
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sharp", "bump"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if not 0 < self.width <= 1:
            raise ValueError("bump width must lie in (0, 1]")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "sharp":
            return ((t >= 0) & (t <= 1)).astype(float)
        s = (2 * t - 1) / self.width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(1 - 1 / (1 - s[inside] ** 2))
        return out

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "sharp":
            return 0.0, 1.0
        return 0.5 - self.width / 2, 0.5 + self.width / 2


@dataclass
class SpaceTimeGrid:
    """Samples on ``x_j = L * j / n`` per axis, one slice per time."""

    times: np.ndarray
    lengths: np.ndarray
    shape: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def points(self) -> np.ndarray:
        axes = [L * np.arange(n) / n for L, n in zip(self.lengths, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def min_resolution(data: SpectralData) -> np.ndarray:
    """Smallest per-axis sample count exceeding twice the largest harmonic."""
    if len(data) == 0:
        return np.ones(data.d, dtype=np.int64)
    return 2 * np.abs(data.indices).max(axis=0) + 1


def grid_slices(data: SpectralData, kind: str, times, shape) -> np.ndarray:
    """Field values on the proportional grid for every time in ``times``.

    Harmonics are placed modulo ``n``; the inverse DFT is exact at the grid
    points for any ``n``, so callers pick ``shape`` for their own quadrature
    needs.  Returns an array of shape ``(len(times), *shape)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    shape = tuple(int(n) for n in shape)
    out = np.zeros((len(times),) + shape, dtype=complex)
    if len(data) == 0:
        return out
    sign, pref, omega = kind_constants(data, kind)
    slots = tuple((sign * data.indices[:, i]) % shape[i] for i in range(data.d))
    flat = np.ravel_multi_index(slots, shape)
    if len(np.unique(flat)) != len(flat):
        raise ValueError("grid too coarse: distinct atoms share a slot")
    amp = pref * np.exp(-1j * np.outer(times, omega)) * data.coeffs
    out.reshape(len(times), -1)[:, flat] = amp
    axes = tuple(range(1, data.d + 1))
    return scipy.fft.ifftn(out, axes=axes, norm="forward", overwrite_x=True)


def evolve_grid(data: SpectralData, times, shape=None) -> SpaceTimeGrid:
    """Fast path for ``evolve`` on a uniform spatial grid over one period cell."""
    need = min_resolution(data)
    shape = tuple(int(v) for v in (need if shape is None else shape))
    if np.any(np.array(shape) < need):
        raise ValueError(f"resolution {shape} below bandwidth requirement {tuple(need)}")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = grid_slices(data, PROPAGATOR, times, shape)
    return SpaceTimeGrid(times, data.torus.lengths, shape, vals)


def extend_grid(data: SpectralData, times, shape=None) -> SpaceTimeGrid:
    need = min_resolution(data)
    shape = tuple(int(v) for v in (need if shape is None else shape))
    if np.any(np.array(shape) < need):
        raise ValueError(f"resolution {shape} below bandwidth requirement {tuple(need)}")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = grid_slices(data, EXTENSION, times, shape)
    return SpaceTimeGrid(times, data.torus.lengths, shape, vals)


def parabolic_rescale_bridge(data: SpectralData, N1: float, c2: float = 2.0) -> SpectralData:
    """Move propagator data at scale ``N1`` to extension data near the unit sphere.

    The atom indices are unchanged; only the lattice is relabelled as
    ``Lambda_{lam N1}`` and the amplitudes pick up ``lam^{-d/2}``.
    """
    if N1 <= 0:
        raise ValueError("N1 must be positive")
    k = data.frequencies
    if len(data) and np.max(np.sqrt(np.sum(k * k, axis=-1))) > c2 * N1 * (1 + 1e-12):
        raise ValueError(f"support exceeds |k| <= {c2} * N1")
    lam = data.torus.lam
    return SpectralData(data.torus.dilate(N1), data.indices, data.coeffs * lam ** (-data.d / 2))


def inverse_bridge(h: SpectralData, N1: float, lam: float) -> SpectralData:
    torus = h.torus.dilate(1.0 / N1)
    torus = RescaledTorus(torus.shape, lam)
    if not np.isclose(h.torus.lam, lam * N1, rtol=1e-14):
        raise ValueError("lattice of h does not match lam * N1")
    return SpectralData(torus, h.indices, h.coeffs * lam ** (h.d / 2))


def bridge_point_map(x, t, N1: float):
    """Space-time point at which ``Eh`` reproduces ``U(t) phi (x)``."""
    return -N1 * np.asarray(x, dtype=float), 2 * np.pi * N1 ** 2 * np.asarray(t, dtype=float)


def mass_over_time(data: SpectralData, times, shape=None) -> np.ndarray:
    """``||U(t) phi||_{L^2(T_lam)}`` by exact trigonometric quadrature on each slice."""
    g = evolve_grid(data, times, shape)
    cell = data.torus.measure
    return np.sqrt(cell * np.mean(np.abs(g.values) ** 2, axis=tuple(range(1, data.d + 1))))


def random_data(torus: RescaledTorus, indices: np.ndarray, rng: np.random.Generator,
                kind: str = "unimodular") -> SpectralData:
    """Random amplitudes on the given atoms (unimodular or complex Gaussian)."""
    n = len(indices)
    if kind == "unimodular":
        c = np.exp(2j * np.pi * rng.random(n))
    elif kind == "gaussian":
        c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    else:
        raise ValueError(f"unknown amplitude kind {kind!r}")
    return SpectralData(torus, indices, c)


def concat(parts: Iterable[SpectralData]) -> SpectralData:
    parts = list(parts)
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out
