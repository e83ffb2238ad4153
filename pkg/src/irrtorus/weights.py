"""Space-time regions and the polynomially decaying weights adapted to them.

The box weight is a product of one-dimensional profiles

    w_i(s) = Z * (1 + dist(s, [a_i, b_i]) / l_i) ** (-E),   dist <= c_cut * l_i

with ``l_i = b_i - a_i``.  ``Z`` is chosen so that each factor integrates to
``l_i``, hence ``int w = m(A)`` exactly.  Its Fourier transform has a closed
form up to one oscillatory integral ``T_c(beta)``, evaluated by Gauss-Legendre
in a logarithmic variable or by its asymptotic series when ``beta`` is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

DECAY = "decay"
INDICATOR = "indicator"


@dataclass(frozen=True)
class SpaceTimeRegion:
    """Axis-aligned box ``[t0, t1] x prod [lo_i, hi_i]`` or a space-time ball.

    Balls are evaluated through the circumscribed cube (side ``2 r``); their
    exact measure is still exposed by ``ball_measure``.
    """

    t_range: tuple[float, float]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    kind: str = "box"

    def __post_init__(self):
        t0, t1 = (float(v) for v in self.t_range)
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("lower and upper corners differ in dimension")
        if not t1 > t0 or any(not h > l for l, h in zip(lo, hi)):
            raise ValueError("region must have positive measure")
        if self.kind not in ("box", "ball"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        object.__setattr__(self, "t_range", (t0, t1))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, t_range, lower, upper) -> "SpaceTimeRegion":
        return cls(tuple(t_range), tuple(lower), tuple(upper))

    @classmethod
    def ball(cls, radius: float, d: int, center=None) -> "SpaceTimeRegion":
        c = np.zeros(d + 1) if center is None else np.asarray(center, dtype=float)
        return cls((c[0] - radius, c[0] + radius), tuple(c[1:] - radius), tuple(c[1:] + radius), "ball")

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def intervals(self) -> list[tuple[float, float]]:
        """Time interval first, then the spatial intervals."""
        return [self.t_range] + list(zip(self.lower, self.upper))

    @property
    def sides(self) -> np.ndarray:
        return np.array([b - a for a, b in self.intervals])

    @property
    def measure(self) -> float:
        """Measure of the box actually integrated over."""
        return float(np.prod(self.sides))

    @property
    def ball_measure(self) -> float:
        r = self.sides[0] / 2
        n = self.d + 1
        return float(math.pi ** (n / 2) / special.gamma(n / 2 + 1) * r ** n)

    @property
    def center(self) -> np.ndarray:
        return np.array([(a + b) / 2 for a, b in self.intervals])

    def translated(self, dt: float = 0.0, dx=None) -> "SpaceTimeRegion":
        dx = np.zeros(self.d) if dx is None else np.asarray(dx, dtype=float)
        return SpaceTimeRegion((self.t_range[0] + dt, self.t_range[1] + dt),
                               tuple(np.array(self.lower) + dx), tuple(np.array(self.upper) + dx), self.kind)


def tail_integral0(E: float, c: float) -> float:
    """``int_0^c (1 + v)^{-E} dv``."""
    return (1 - (1 + c) ** (1 - E)) / (E - 1)


@dataclass(frozen=True)
class WeightSpec:
    region: SpaceTimeRegion
    kind: str = DECAY
    E: int = 50
    c_cut: float = 3.0

    def __post_init__(self):
        if self.kind not in (DECAY, INDICATOR):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == DECAY and not self.E > 1:
            raise ValueError("decay exponent must exceed 1")
        if self.c_cut < 0:
            raise ValueError("cutoff multiple must be nonnegative")

    @property
    def Z(self) -> float:
        """Per-axis normalization constant."""
        if self.kind == INDICATOR:
            return 1.0
        return 1.0 / (1.0 + 2.0 * tail_integral0(self.E, self.c_cut))

    @property
    def measure(self) -> float:
        return self.region.measure

    @property
    def tail_mass_dropped(self) -> float:
        """Relative mass a profile would carry beyond the cutoff, before renormalizing."""
        if self.kind == INDICATOR:
            return 0.0
        return 2 * (1 + self.c_cut) ** (1 - self.E) / (self.E - 1)

    def support(self) -> list[tuple[float, float]]:
        ext = 0.0 if self.kind == INDICATOR else self.c_cut
        out = []
        for a, b in self.region.intervals:
            ell = b - a
            out.append((a - ext * ell, b + ext * ell))
        return out


def axis_profile(w: WeightSpec, axis: int, s) -> np.ndarray:
    a, b = w.region.intervals[axis]
    s = np.asarray(s, dtype=float)
    ell = b - a
    dist = np.maximum(a - s, 0) + np.maximum(s - b, 0)
    if w.kind == INDICATOR:
        return (dist == 0).astype(float)
    u = dist / ell
    return np.where(u <= w.c_cut, w.Z * (1 + u) ** (-float(w.E)), 0.0)


def weight_eval(w: WeightSpec, x, t) -> np.ndarray:
    """Evaluate the separable weight at points ``(x[i], t[i])``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
    if x.shape[-1] != w.region.d:
        raise ValueError("spatial dimension mismatch")
    val = axis_profile(w, 0, t)
    for i in range(w.region.d):
        val = val * axis_profile(w, i + 1, x[:, i])
    return val


@dataclass(frozen=True)
class RadialWeight:
    """Radial weight ``Z (1 + dist(y, B) / diam B)^{-E}`` for a ball ``B`` in R^{n}."""

    radius: float
    n: int
    E: int = 50
    c_cut: float = 3.0

    @property
    def Z(self) -> float:
        return _radial_norm(self.radius, self.n, self.E, self.c_cut)

    @property
    def measure(self) -> float:
        return float(math.pi ** (self.n / 2) / special.gamma(self.n / 2 + 1) * self.radius ** self.n)

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = np.sqrt(np.sum(y * y, axis=-1))
        u = np.maximum(r - self.radius, 0) / (2 * self.radius)
        return np.where(u <= self.c_cut, self.Z * (1 + u) ** (-float(self.E)), 0.0)


@lru_cache(maxsize=64)
def _radial_norm(radius, n, E, c_cut) -> float:
    area = 2 * math.pi ** (n / 2) / special.gamma(n / 2)
    vol = area * radius ** n / n
    tail, _ = integrate.quad(lambda r: (1 + (r - radius) / (2 * radius)) ** (-E) * area * r ** (n - 1),
                             radius, radius * (1 + 2 * c_cut), epsabs=0, epsrel=1e-13, limit=200)
    return vol / (vol + tail)


# ---------------------------------------------------------------- Fourier side

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _tail_transform_quad(E: float, c: float, beta: np.ndarray) -> np.ndarray:
    """``T_c(beta) = int_0^c (1+v)^{-E} e^{i beta v} dv`` via ``v = e^x - 1``."""
    xmax = min(math.log1p(c), 40.0 / (E - 1))
    bmax = float(np.max(np.abs(beta))) if beta.size else 0.0
    cycles = bmax * math.exp(xmax) * xmax / (2 * math.pi)
    panels = max(int(math.ceil(cycles / 1.5)), int(math.ceil(xmax / 0.1)), 1)
    edges = np.linspace(0.0, xmax, panels + 1)
    h = np.diff(edges) / 2
    nodes = (edges[:-1, None] + h[:, None] * (_GL_X[None, :] + 1)).ravel()
    wts = (h[:, None] * _GL_W[None, :]).ravel() * np.exp(-(E - 1) * nodes)
    v = np.expm1(nodes)
    out = np.empty(beta.shape, dtype=complex)
    for s in range(0, beta.size, 256):
        b = beta.ravel()[s:s + 256]
        out.ravel()[s:s + 256] = np.exp(1j * np.outer(b, v)) @ wts
    return out


def _tail_transform_series(E: float, beta: np.ndarray) -> np.ndarray:
    """Large-``beta`` expansion of the untruncated tail, ``-sum (E)_n / (i beta)^{n+1}``."""
    z = 1j * beta
    term = -1.0 / z
    total = term.copy()
    for n in range(200):
        term = term * (E + n) / z
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def tail_transform(E: float, c: float, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    out = np.empty(beta.shape, dtype=complex)
    big = np.abs(beta) >= max(200.0, 4.0 * E)
    # the series ignores the cutoff, which is harmless once the boundary value is negligible
    if (1 + c) ** (-E) > 1e-18:
        big[:] = False
    if np.any(big):
        out[big] = _tail_transform_series(E, beta[big])
    if np.any(~big):
        out[~big] = _tail_transform_quad(E, c, beta[~big])
    return out


def axis_transform(w: WeightSpec, axis: int, f) -> np.ndarray:
    """``int w_axis(s) e^{-2 pi i f s} ds`` in closed form."""
    a, b = w.region.intervals[axis]
    f = np.asarray(f, dtype=float)
    ell = b - a
    beta = 2 * np.pi * f * ell
    core = ell * np.sinc(f * ell) * np.exp(-1j * np.pi * f * (a + b))
    if w.kind == INDICATOR:
        return core
    left = np.exp(-2j * np.pi * f * a) * ell * tail_transform(w.E, w.c_cut, beta)
    right = np.exp(-2j * np.pi * f * b) * ell * tail_transform(w.E, w.c_cut, -beta)
    return w.Z * (core + left + right)


# ------------------------------------------------------------ time quadrature

def _panels(lo: float, hi: float, count: int):
    edges = np.linspace(lo, hi, count + 1)
    h = np.diff(edges) / 2
    x = (edges[:-1, None] + h[:, None] * (_GL_X[None, :] + 1)).ravel()
    wt = (h[:, None] * _GL_W[None, :]).ravel()
    return x, wt


def time_nodes(w: WeightSpec, omega_max: float, refine: int = 1, profile=None):
    """Gauss-Legendre nodes and weights for ``int g(t) w_t(t) dt``.

    ``omega_max`` bounds the angular frequencies present in ``g``; panels hold
    at most about two oscillations.  Tails use ``t = b + l (e^x - 1)``.
    ``profile`` multiplies the weights by an extra function of ``t``.
    """
    a, b = w.region.t_range
    ell = b - a
    per_panel = 2.0 * 2 * math.pi / refine

    def count(span):
        return max(int(math.ceil(omega_max * span / per_panel)), refine)

    t, wt = _panels(a, b, count(ell))
    if w.kind == DECAY:
        wt = wt * w.Z
        xmax = min(math.log1p(w.c_cut), 40.0 / (w.E - 1))
        # uniform panels in x must resolve the fastest local rate, reached at xmax
        span = ell * math.exp(xmax) * xmax
        n = max(count(span), int(math.ceil(xmax / 0.05)) * refine)
        x, xw = _panels(0.0, xmax, n)
        jac = ell * np.exp(x) * np.exp(-w.E * x) * w.Z * xw
        off = ell * np.expm1(x)
        t = np.concatenate([a - off[::-1], t, b + off])
        wt = np.concatenate([jac[::-1], wt, jac])
    if profile is not None:
        wt = wt * profile(t)
    return t, wt
