"""Weighted space-time integrals of products of lattice waves.

Three independent evaluators:

* ``integrate_terms``: spatial trigonometric quadrature on one period cell
  with the weight folded onto the cell through its Fourier transform, and
  composite Gauss-Legendre in time.  Exact in space; time error is spectral.
* ``resonance_bilinear_sq``: closed form for the unweighted bilinear L2 norm
  over one period cell and a time window, grouping pairs by ``m_a + m_b``.
* ``pair_sum_bilinear_sq``: closed form over all of space-time for separable
  weights, with no periodicity used.  Quadratic in the number of pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from .wavefield import EXTENSION, PROPAGATOR, SpectralData, TimeCutoff, grid_slices, kind_constants
from .weights import INDICATOR, SpaceTimeRegion, WeightSpec, axis_transform, time_nodes


@dataclass(frozen=True)
class Wave:
    data: SpectralData
    kind: str = EXTENSION

    def __post_init__(self):
        if self.kind not in (EXTENSION, PROPAGATOR):
            raise ValueError(f"unknown wave kind {self.kind!r}")

    @property
    def spread(self) -> np.ndarray:
        return self.data.index_spread()

    @property
    def omega_spread(self) -> float:
        if len(self.data) < 2:
            return 0.0
        om = kind_constants(self.data, self.kind)[2]
        return float(om.max() - om.min())


# a term is a list of groups; its integrand is prod over groups of sum_{w in group} |F_w|^2
Term = Sequence[Sequence[Wave]]


def product_term(*waves: Wave) -> list[list[Wave]]:
    """Term whose integrand is ``|prod F_j|^2``."""
    return [[w] for w in waves]


def _as_wave(f, kind=EXTENSION) -> Wave:
    return f if isinstance(f, Wave) else Wave(f, kind)


def folded_weight(w: WeightSpec, axis: int, L: float, n: int, S: int) -> np.ndarray:
    """Per-node spatial weight ``omega_j`` on the grid ``x_j = L j / n``.

    ``sum_j g(x_j) omega_j`` equals ``int g w_axis`` for every L-periodic
    trigonometric polynomial ``g`` with harmonics in ``[-S, S]`` when n > 2S.
    """
    if n == 1:
        return np.array([axis_transform(w, axis, np.zeros(1))[0].real])
    h = np.arange(-S, S + 1)
    what = axis_transform(w, axis, -h / L)
    spec = np.zeros(n, dtype=complex)
    spec[h % n] = what
    # omega_j = (1/n) sum_h what_h e^{-2 pi i h j / n}
    return scipy.fft.fft(spec).real / n


@dataclass
class IntegrationPlan:
    lengths: np.ndarray
    shape: tuple[int, ...]
    t: np.ndarray
    tw: np.ndarray
    space_weights: list[np.ndarray] = field(repr=False)

    @property
    def cost(self) -> int:
        return int(len(self.t) * np.prod(self.shape))


def plan_integration(terms: Sequence[Term], weight: WeightSpec, refine: int = 1,
                     profile: Callable | None = None) -> IntegrationPlan:
    waves = [w for term in terms for g in term for w in g]
    if not waves:
        raise ValueError("nothing to integrate")
    torus = waves[0].data.torus
    for w in waves:
        if not np.allclose(w.data.torus.lengths, torus.lengths, rtol=1e-14, atol=0):
            raise ValueError("all waves must share one period cell")
    d = torus.d
    if weight.region.d != d:
        raise ValueError("weight region dimension differs from the waves")
    S = np.zeros(d, dtype=np.int64)
    omega_max = 0.0
    for term in terms:
        s_term = np.zeros(d, dtype=np.int64)
        o_term = 0.0
        for g in term:
            s_term += np.max([w.spread for w in g], axis=0)
            o_term += max(w.omega_spread for w in g)
        S = np.maximum(S, s_term)
        omega_max = max(omega_max, o_term)
    shape = tuple(1 if s == 0 else scipy.fft.next_fast_len(int(2 * s + 1)) for s in S)
    L = torus.lengths
    sw = [folded_weight(weight, i + 1, L[i], shape[i], int(S[i])) for i in range(d)]
    t, tw = time_nodes(weight, omega_max, refine=refine, profile=profile)
    return IntegrationPlan(L, shape, t, tw, sw)


def _contract(vals: np.ndarray, space_weights) -> np.ndarray:
    out = vals
    for w in reversed(space_weights):
        out = out @ w
    return out


def _flat_sq(w: Wave) -> float:
    if len(w.data) == 0:
        return 0.0
    _, pref, _ = kind_constants(w.data, w.kind)
    return float(abs(pref * w.data.coeffs[0]) ** 2)


def integrate_terms(terms: Sequence[Term], weight: WeightSpec, refine: int = 1,
                    profile: Callable | None = None, budget: int = 1 << 22,
                    plan: IntegrationPlan | None = None) -> np.ndarray:
    """``int prod_g sum_{w in g} |F_w|^2 * weight`` for each term."""
    plan = plan or plan_integration(terms, weight, refine, profile)
    uniq: dict[int, Wave] = {}
    for term in terms:
        for g in term:
            for w in g:
                uniq.setdefault(id(w), w)
    # a wave with at most one atom has constant modulus
    consts = {k: _flat_sq(w) for k, w in uniq.items() if len(w.data) <= 1}
    dense = {k: w for k, w in uniq.items() if k not in consts}
    space_total = float(np.prod([np.sum(w) for w in plan.space_weights]))
    cells = int(np.prod(plan.shape))
    chunk = max(1, budget // max(1, cells * (len(dense) + 2)))
    totals = np.zeros(len(terms))
    for s in range(0, len(plan.t), chunk):
        tt = plan.t[s:s + chunk]
        sq = {k: np.abs(grid_slices(w.data, w.kind, tt, plan.shape)) ** 2 for k, w in dense.items()}
        sq.update(consts)
        tw = plan.tw[s:s + chunk]
        for j, term in enumerate(terms):
            integrand = 1.0
            for g in term:
                flat = sum(sq[id(w)] for w in g if id(w) in consts)
                arrays = [sq[id(w)] for w in g if id(w) in dense]
                if arrays:
                    part = arrays[0].copy() if len(arrays) > 1 or flat else arrays[0]
                    for a in arrays[1:]:
                        part += a
                    if flat:
                        part += flat
                else:
                    part = flat
                integrand = integrand * part
            if np.ndim(integrand) == 0:
                totals[j] += float(integrand) * float(np.sum(tw)) * space_total
            else:
                totals[j] += float(tw @ _contract(integrand, plan.space_weights))
    return totals


def integrate_converged(terms: Sequence[Term], weight: WeightSpec, rtol: float = 1e-8,
                        max_refine: int = 8, profile: Callable | None = None):
    """Double the time resolution until successive values agree to ``rtol``."""
    refine = 1
    prev = integrate_terms(terms, weight, refine, profile)
    while refine < max_refine:
        refine *= 2
        cur = integrate_terms(terms, weight, refine, profile)
        scale = np.maximum(np.abs(cur), 1e-300)
        if np.all(np.abs(cur - prev) <= rtol * scale):
            return cur
        prev = cur
    return prev


def bilinear_sq(f1, f2, weight: WeightSpec, kind: str = EXTENSION, refine: int = 1) -> float:
    """``int |F1 F2|^2 weight`` on the period-cell evaluator."""
    return float(integrate_terms([product_term(_as_wave(f1, kind), _as_wave(f2, kind))], weight, refine)[0])


# ------------------------------------------------------------------ oracles

def window_factor(omega, t0: float, T: float) -> np.ndarray:
    """``int_{t0}^{t0+T} e^{-i omega t} dt``, stable at ``omega = 0``."""
    omega = np.asarray(omega, dtype=float)
    return np.exp(-1j * omega * (t0 + T / 2)) * T * np.sinc(omega * T / (2 * np.pi))


@dataclass
class PairTable:
    """All products ``c_a c_b`` with summed indices and phase speeds."""

    K: np.ndarray
    omega: np.ndarray
    coeff: np.ndarray
    a: np.ndarray
    b: np.ndarray


def pair_table(d1: SpectralData, d2: SpectralData, kind: str) -> PairTable:
    if d1.torus != d2.torus:
        raise ValueError("bilinear evaluation needs both data on the same lattice")
    _, p1, o1 = kind_constants(d1, kind)
    _, p2, o2 = kind_constants(d2, kind)
    a, b = np.meshgrid(np.arange(len(d1)), np.arange(len(d2)), indexing="ij")
    a, b = a.ravel(), b.ravel()
    K = d1.indices[a] + d2.indices[b]
    om = o1[a] + o2[b]
    c = p1 * p2 * d1.coeffs[a] * d2.coeffs[b]
    return PairTable(K, om, c, a, b)


def resonant_pairs(table: PairTable):
    """Index arrays ``(p, q)`` over all pairs of pairs that share ``K``."""
    if len(table.K) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    _, inv = np.unique(table.K, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    sizes = np.bincount(inv)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    g = sizes[inv[order]]
    st = starts[inv[order]]
    rep = np.repeat(np.arange(len(order)), g)
    offs = np.arange(len(rep)) - np.repeat(np.cumsum(g) - g, g)
    p = order[rep]
    q = order[st[rep] + offs]
    return p, q


def resonance_bilinear_sq(d1: SpectralData, d2: SpectralData, kind: str = PROPAGATOR,
                          t0: float = 0.0, T: float = 1.0) -> float:
    """Exact ``int_{t0}^{t0+T} int_cell |F1 F2|^2`` (unweighted)."""
    tab = pair_table(d1, d2, kind)
    p, q = resonant_pairs(tab)
    tau = window_factor(tab.omega[p] - tab.omega[q], t0, T)
    val = np.sum(tab.coeff[p] * np.conj(tab.coeff[q]) * tau).real
    return float(d1.torus.measure * max(val, 0.0))


def bilinear_l2_resonance(d1: SpectralData, d2: SpectralData, cutoff: TimeCutoff | None = None) -> float:
    """``||U phi1 U phi2||_{L^2([0,1] x T_lam)}`` in closed form (sharp cutoff only)."""
    cutoff = cutoff or TimeCutoff()
    if cutoff.kind != "sharp":
        raise ValueError("the resonance evaluator needs the sharp cutoff")
    return math.sqrt(resonance_bilinear_sq(d1, d2, PROPAGATOR, 0.0, 1.0))


def torus_window_weight(torus, t0: float = 0.0, T: float = 1.0) -> WeightSpec:
    """Indicator of ``[t0, t0+T]`` times one spatial period cell."""
    L = torus.lengths
    return WeightSpec(SpaceTimeRegion((t0, t0 + T), tuple(np.zeros(len(L))), tuple(L)), INDICATOR)


def bilinear_l2_grid(d1: SpectralData, d2: SpectralData, cutoff: TimeCutoff | None = None,
                     refine: int = 1) -> float:
    """Same quantity as ``bilinear_l2_resonance`` by grid quadrature; allows the bump cutoff."""
    cutoff = cutoff or TimeCutoff()
    a, b = cutoff.support
    w = torus_window_weight(d1.torus, a, b - a)
    profile = None if cutoff.kind == "sharp" else (lambda t: cutoff(t) ** 4)
    val = integrate_terms([product_term(Wave(d1, PROPAGATOR), Wave(d2, PROPAGATOR))], w, refine, profile)[0]
    return math.sqrt(max(val, 0.0))


def pair_sum_bilinear_sq(d1: SpectralData, d2: SpectralData, weight: WeightSpec, kind: str = EXTENSION) -> float:
    """``int_{R^{d+1}} |F1 F2|^2 weight`` from the weight's Fourier transform, pair by pair."""
    tab = pair_table(d1, d2, kind)
    sign = kind_constants(d1, kind)[0]
    freq = d1.torus.frequencies(tab.K)
    n = len(tab.coeff)
    p, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    p, q = p.ravel(), q.ravel()
    # spatial phase exp(sign 2 pi i K.x): integral is what(-sign (K_p - K_q))
    fac = axis_transform(weight, 0, (tab.omega[p] - tab.omega[q]) / (2 * np.pi))
    for i in range(d1.d):
        fac = fac * axis_transform(weight, i + 1, -sign * (freq[p, i] - freq[q, i]))
    val = np.sum(tab.coeff[p] * np.conj(tab.coeff[q]) * fac).real
    return float(val)


# ----------------------------------------------------------------- norms

def lp_avg_norm(field, weight: WeightSpec | SpaceTimeRegion, p, refine: int = 1,
                samples: int = 33, kind: str = EXTENSION) -> float:
    """Averaged ``L^p`` norm ``((1/m(A)) int |g|^p w_A)^{1/p}``.

    ``field`` is spectral data (or a ``Wave``), evaluated exactly, or a
    callable ``g(x, t)`` integrated by tensor Gauss-Legendre with ``samples``
    nodes per axis over the weight support.  ``p = inf`` returns a grid
    maximum over the region, refined until stable to 1e-6.
    """
    if isinstance(weight, SpaceTimeRegion):
        weight = WeightSpec(weight, INDICATOR)
    if p in (np.inf, "inf", math.inf):
        return sup_norm(field, weight.region, kind=kind)
    if p not in (2, 4):
        raise ValueError("p must be 2, 4 or inf")
    m = weight.measure
    if callable(field) and not isinstance(field, (Wave, SpectralData)):
        return _callable_norm(field, weight, p, samples)
    wave = _as_wave(field, kind)
    term = [[wave]] if p == 2 else [[wave], [wave]]
    val = integrate_terms([term], weight, refine)[0]
    return float((max(val, 0.0) / m) ** (1.0 / p))


def _callable_norm(g, weight: WeightSpec, p, samples):
    from .weights import weight_eval
    gx, gw = np.polynomial.legendre.leggauss(samples)
    axes, wts = [], []
    for (lo, hi), (a, b) in zip(weight.support(), weight.region.intervals):
        # panels break at the box faces and grade into the decaying tails
        ell = b - a
        cuts = [a - f * ell for f in (0.5, 0.2, 0.05)] + [a, b] + [b + f * ell for f in (0.05, 0.2, 0.5)]
        edges = sorted({lo, hi, *(c for c in cuts if lo < c < hi)})
        nodes, weights = [], []
        for p0, p1 in zip(edges[:-1], edges[1:]):
            h = (p1 - p0) / 2
            nodes.append(p0 + h * (gx + 1))
            weights.append(h * gw)
        axes.append(np.concatenate(nodes))
        wts.append(np.concatenate(weights))
    mesh = np.meshgrid(*axes, indexing="ij")
    W = np.ones_like(mesh[0])
    for i, w in enumerate(wts):
        W = W * w.reshape([-1 if j == i else 1 for j in range(len(wts))])
    t = mesh[0].ravel()
    x = np.stack([m.ravel() for m in mesh[1:]], axis=-1)
    vals = np.asarray(g(x, t))
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite field samples")
    integral = np.sum(np.abs(vals) ** p * weight_eval(weight, x, t) * W.ravel())
    return float((integral / weight.measure) ** (1.0 / p))


def sup_norm(field, region: SpaceTimeRegion, kind: str = EXTENSION, start: int = 17,
             rtol: float = 1e-6, max_level: int = 6) -> float:
    """Max of ``|g|`` over the box, doubling the sampling grid until stable."""
    from .wavefield import _direct_sum

    if isinstance(field, (Wave, SpectralData)):
        wave = _as_wave(field, kind)
        evaluate = lambda x, t: _direct_sum(wave.data, wave.kind, x, t)
    else:
        evaluate = field
    prev = None
    n = start
    for _ in range(max_level):
        axes = [np.linspace(a, b, n) for a, b in region.intervals]
        mesh = np.meshgrid(*axes, indexing="ij")
        t = mesh[0].ravel()
        x = np.stack([m.ravel() for m in mesh[1:]], axis=-1)
        vals = []
        for s in range(0, len(t), 1 << 16):
            vals.append(np.abs(evaluate(x[s:s + (1 << 16)], t[s:s + (1 << 16)])))
        cur = float(np.max(np.concatenate(vals)))
        if not math.isfinite(cur):
            raise ValueError("non-finite field samples")
        if prev is not None and abs(cur - prev) <= rtol * max(cur, 1e-300):
            return cur
        prev = cur
        n = 2 * n - 1
    return prev


# --------------------------------------------------------------- lemma checks

@dataclass
class RatioReport:
    ratio: float
    lhs: float
    rhs: float
    hypothesis_ok: bool = True
    note: str = ""


def cube_separation_ok(pieces: Sequence[SpectralData], side: float) -> bool:
    """Every piece sits in its own cube of the grid of side ``side``."""
    seen = {}
    for j, pc in enumerate(pieces):
        if len(pc) == 0:
            continue
        cells = {tuple(c) for c in np.floor(pc.frequencies / side).astype(np.int64)}
        if len(cells) != 1:
            return False
        cell = cells.pop()
        if cell in seen:
            return False
        seen[cell] = j
    return True


def check_l2_orthogonality(pieces: Sequence[SpectralData], weight: WeightSpec, side: float,
                           kind: str = EXTENSION) -> RatioReport:
    """Ratio of ``avg |sum g|^2 w`` to ``sum avg |g|^2 w``."""
    ok = cube_separation_ok(pieces, side)
    for r in weight.region.sides:
        ok &= r >= 1.0 / side * (1 - 1e-12)
    total = pieces[0]
    for pc in pieces[1:]:
        total = total + pc
    sep = [Wave(pc, kind) for pc in pieces]
    lhs, rhs = integrate_terms([[[Wave(total, kind)]], [sep]], weight)
    return RatioReport(float(lhs / rhs), float(lhs / weight.measure), float(rhs / weight.measure), bool(ok))


def check_linfty_vs_lp(data: SpectralData, R: float, p: int = 4, weight_kind: str = "decay") -> RatioReport:
    """``||Ef||_{L^inf(B_R)} / ||Ef||_{L^p_avg(w_{B_R})}`` for data in ``B_{1/R}``."""
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    r = np.sqrt(np.sum(data.frequencies ** 2, axis=-1))
    ok = bool(np.all(r <= 1.0 / R * (1 + 1e-12)))
    region = SpaceTimeRegion.ball(R, data.d)
    w = WeightSpec(region, weight_kind)
    top = sup_norm(data, region)
    bottom = lp_avg_norm(data, w, p)
    return RatioReport(top / bottom, top, bottom, ok)


def tile_box(region: SpaceTimeRegion, splits: Sequence[int]) -> list[SpaceTimeRegion]:
    """Split a box into ``prod splits`` congruent boxes (time axis first)."""
    edges = [np.linspace(a, b, k + 1) for (a, b), k in zip(region.intervals, splits)]
    out = []
    for idx in np.ndindex(*[len(e) - 1 for e in edges]):
        iv = [(edges[i][j], edges[i][j + 1]) for i, j in enumerate(idx)]
        out.append(SpaceTimeRegion(iv[0], tuple(a for a, _ in iv[1:]), tuple(b for _, b in iv[1:])))
    return out


def partition_ok(pieces: Sequence[SpaceTimeRegion], union: SpaceTimeRegion, tol: float = 1e-9) -> bool:
    """Boxes are pairwise disjoint (up to faces) and fill the union box."""
    vol = sum(p.measure for p in pieces)
    if abs(vol - union.measure) > tol * union.measure:
        return False
    for p in pieces:
        for (a, b), (c, e) in zip(p.intervals, union.intervals):
            if a < c - tol * (e - c) or b > e + tol * (e - c):
                return False
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            inter = 1.0
            for (a, b), (c, e) in zip(pieces[i].intervals, pieces[j].intervals):
                inter *= max(0.0, min(b, e) - max(a, c))
            if inter > tol * union.measure:
                return False
    return True


@dataclass
class ParallelReport:
    union_ratio: float
    piece_ratios: list[float]
    holds: bool
    tolerance: float = 0.05


def decoupling_ratio(f1: SpectralData, f2: SpectralData, caps1, caps2, weight: WeightSpec) -> float:
    """``||E f1 E f2||_{L^2_avg(w)} / prod_j (sum_theta ||E f_{j,theta}||^2_{L^4_avg(w)})^{1/2}``."""
    m = weight.measure
    w1, w2 = Wave(f1), Wave(f2)
    pieces = [Wave(c) for c in caps1] + [Wave(c) for c in caps2]
    terms = [product_term(w1, w2)] + [[[pc], [pc]] for pc in pieces]
    vals = integrate_terms(terms, weight) / m
    lhs = math.sqrt(max(vals[0], 0.0))
    l4 = np.sqrt(np.sqrt(np.maximum(vals[1:], 0.0)))
    n1 = len(caps1)
    rhs = math.sqrt(np.sum(l4[:n1] ** 2)) * math.sqrt(np.sum(l4[n1:] ** 2))
    return lhs / rhs


def parallel_decoupling_check(pieces: Sequence[SpaceTimeRegion], union: SpaceTimeRegion,
                              ratio_of: Callable[[WeightSpec], float], weight_kind: str = "decay",
                              tolerance: float = 0.05) -> ParallelReport:
    """Compare the union-region ratio with the largest per-piece ratio."""
    if not partition_ok(pieces, union):
        raise ValueError("pieces do not partition the union region")
    piece = [ratio_of(WeightSpec(p, weight_kind)) for p in pieces]
    whole = ratio_of(WeightSpec(union, weight_kind))
    return ParallelReport(whole, piece, whole <= max(piece) * (1 + tolerance), tolerance)


def bridge_norm_identity(phi1: SpectralData, phi2: SpectralData, N1: float) -> tuple[float, float]:
    """Both sides of the torus-to-extension norm identity.

    Left: ``||U phi1 U phi2||_{L^2([0,1] x T_lam)}`` by the resonance oracle.
    Right: ``N1^{-(d+2)/2} (2 pi)^{-1/2} m(Q)^{1/2} ||Eh1 Eh2||_{L^2_avg(Q)}`` with
    ``Q = [0, 2 pi N1^2] x T_{lam N1}``, by grid quadrature.
    """
    from .wavefield import parabolic_rescale_bridge

    h1 = parabolic_rescale_bridge(phi1, N1)
    h2 = parabolic_rescale_bridge(phi2, N1)
    d = phi1.d
    lhs = bilinear_l2_resonance(phi1, phi2)
    w = torus_window_weight(h1.torus, 0.0, 2 * np.pi * N1 ** 2)
    avg = math.sqrt(max(bilinear_sq(h1, h2, w), 0.0) / w.measure)
    rhs = N1 ** (-(d + 2) / 2) * (2 * np.pi) ** -0.5 * math.sqrt(w.measure) * avg
    return lhs, rhs
