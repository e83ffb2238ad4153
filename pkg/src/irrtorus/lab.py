"""Both sides of the bilinear estimates, lemma ratio checks, best-constant search and sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .caps import Cap, cap_atoms, cover_cap_with_plates, cover_with_caps, parabolic_rescale, split_by_pieces
from .lattice import Annulus, Ball, RescaledTorus, TorusShape, lattice_indices, region_mask
from .norms import (Wave, integrate_terms, pair_sum_bilinear_sq, pair_table, product_term,
                    resonance_bilinear_sq, resonant_pairs, bilinear_l2_grid, window_factor)
from .wavefield import PROPAGATOR, SpectralData, TimeCutoff, random_data
from .weights import DECAY, SpaceTimeRegion, WeightSpec


class CostCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimateConfig:
    d: int = 2
    alphas: tuple[float, ...] = ()
    lam: float = 1.0
    N1: float = 4.0
    N2: float = 2.0
    c1: float = 0.5
    c2: float = 2.0
    cutoff: str = "sharp"
    evaluator: str = "resonance"
    eps: float = 0.05

    def __post_init__(self):
        if not self.N1 >= self.N2 >= 1:
            raise ValueError("need N1 >= N2 >= 1")
        if not self.lam >= 1:
            raise ValueError("need lambda >= 1")
        if self.evaluator not in ("resonance", "grid", "pairsum"):
            raise ValueError(f"unknown evaluator {self.evaluator!r}")
        object.__setattr__(self, "alphas", TorusShape(self.d, tuple(self.alphas)).alphas)

    @property
    def shape(self) -> TorusShape:
        return TorusShape(self.d, self.alphas)

    @property
    def torus(self) -> RescaledTorus:
        return RescaledTorus(self.shape, self.lam)

    @property
    def fine_torus(self) -> RescaledTorus:
        """Lattice ``Lambda_{lam N1}`` carrying the rescaled data."""
        return RescaledTorus(self.shape, self.lam * self.N1)

    @property
    def cap_radius(self) -> float:
        return 1.0 / (self.lam * self.N1)

    def annulus(self, N: float) -> Annulus:
        return Annulus(N, self.c1, self.c2)

    def omega_region(self) -> SpaceTimeRegion:
        side = (self.lam * self.N1) ** 2
        return SpaceTimeRegion.box((0.0, self.N1 ** 2), (0.0,) * self.d, (side,) * self.d)


@dataclass
class EstimateReport:
    config: EstimateConfig
    lhs: float
    rhs_base: float
    D_factor: float
    prefactor: float = 1.0
    seed: int | None = None
    evaluator: str = "resonance"
    extra: dict = field(default_factory=dict)

    @property
    def raw_ratio(self) -> float:
        return self.lhs / self.rhs_base

    @property
    def ratio(self) -> float:
        return self.lhs / (self.prefactor * math.sqrt(self.D_factor) * self.rhs_base)

    def as_row(self) -> dict:
        row = {"lhs": self.lhs, "rhs_base": self.rhs_base, "d_factor": self.D_factor, "ratio": self.ratio}
        row.update(asdict(self.config))
        return row


@dataclass
class SlopeFit:
    variable: str
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    residual: float
    predicted: float | None = None

    @property
    def deviation(self) -> float | None:
        return None if self.predicted is None else self.slope - self.predicted

    def within(self, tol: float) -> bool:
        return self.predicted is not None and abs(self.slope - self.predicted) <= tol

    def as_dict(self) -> dict:
        return {"variable": self.variable, "log2_x": [float(v) for v in self.x],
                "log2_y": [float(v) for v in self.y], "slope": self.slope,
                "intercept": self.intercept, "residual": self.residual, "predicted": self.predicted}


def fit_slope(xs, ys, variable: str = "x", predicted: float | None = None, min_points: int = 4) -> SlopeFit:
    """Least-squares slope of ``log2 y`` against ``log2 x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < min_points:
        raise ValueError(f"need at least {min_points} points for a slope fit")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive values")
    lx, ly = np.log2(xs), np.log2(ys)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - ly) ** 2)))
    return SlopeFit(variable, lx, ly, float(slope), float(icpt), res, predicted)


def D_factor(lam: float, N1: float, N2: float, d: int) -> float:
    if d < 2:
        raise ValueError("dimension must be >= 2")
    if d == 2:
        return 1.0 / lam + N2 / N1
    return N2 ** (d - 3) / lam + N2 ** (d - 1) / N1


def _check_support(data: SpectralData, region, what: str):
    if len(data) and not np.all(region_mask(data.torus, data.indices, region)):
        raise ValueError(f"{what} has atoms outside its frequency region")


# ------------------------------------------------------------ theorem sides

def thm11_sides(phi1: SpectralData, phi2: SpectralData, config: EstimateConfig,
                seed: int | None = None, evaluator: str | None = None) -> EstimateReport:
    """``||U phi1 U phi2||_{L^2([0,1] x T_lam)}`` against ``||phi1|| ||phi2||``."""
    _check_support(phi1, config.annulus(config.N1), "phi1")
    _check_support(phi2, config.annulus(config.N2), "phi2")
    ev = evaluator or config.evaluator
    cutoff = TimeCutoff(config.cutoff)
    if ev == "resonance":
        if cutoff.kind != "sharp":
            raise ValueError("the resonance evaluator needs the sharp cutoff")
        lhs = math.sqrt(resonance_bilinear_sq(phi1, phi2, PROPAGATOR, 0.0, 1.0))
    elif ev == "grid":
        lhs = bilinear_l2_grid(phi1, phi2, cutoff)
    else:
        raise ValueError(f"evaluator {ev!r} not available for the torus estimate")
    rhs = phi1.function_norm() * phi2.function_norm()
    return EstimateReport(config, lhs, rhs, D_factor(config.lam, config.N1, config.N2, config.d),
                          1.0, seed, ev)


def single_atom_caps(data: SpectralData, config: EstimateConfig) -> list[SpectralData]:
    """Split data over caps of radius ``1/(lam N1)``; each must hold one atom."""
    if len(data) == 0:
        return []
    r = np.sqrt(np.sum(data.frequencies ** 2, axis=-1)).max()
    caps = cover_with_caps(max(r, config.cap_radius), config.cap_radius, d=data.d, single_atom=True)
    pieces = cap_atoms(data, caps)
    if any(len(p) > 1 for p in pieces):
        raise ValueError("a cap holds two atoms; the single-atom reduction fails")
    return pieces


def thm12_sides(f1: SpectralData, f2: SpectralData, config: EstimateConfig, region: SpaceTimeRegion | None = None,
                seed: int | None = None, evaluator: str = "grid", weight_kind: str = DECAY,
                check_support: bool = True) -> EstimateReport:
    """``||E f1 E f2||_{L^2_avg(w)}`` against the cap-decoupled product on ``Omega``.

    With one atom per cap every ``E f_theta`` has constant modulus, so its
    averaged ``L^4`` norm under a normalized weight is the atom's modulus.
    """
    if check_support:
        _check_support(f1, Annulus(1.0, config.c1, config.c2), "f1")
        _check_support(f2, Annulus(config.N2 / config.N1, config.c1, config.c2), "f2")
    for f in (f1, f2):
        single_atom_caps(f, config)
    region = region or config.omega_region()
    w = WeightSpec(region, weight_kind)
    if evaluator == "grid":
        sq = float(integrate_terms([product_term(Wave(f1), Wave(f2))], w)[0])
    elif evaluator == "pairsum":
        sq = pair_sum_bilinear_sq(f1, f2, w)
    else:
        raise ValueError(f"evaluator {evaluator!r} not available for the decoupling estimate")
    lhs = math.sqrt(max(sq, 0.0) / w.measure)
    rhs = f1.l2 * f2.l2
    return EstimateReport(config, lhs, rhs, D_factor(config.lam, config.N1, config.N2, config.d),
                          config.lam ** (config.d / 2), seed, evaluator, {"lhs_sq_unavg": sq, "measure": w.measure})


# ------------------------------------------------------------ lemma checks

def transversal_centers(d: int, K: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Centers of the two caps: ``e_last`` (or ``e_last / K``) and the origin."""
    c1 = np.zeros(d)
    c1[-1] = 1.0 if K is None else 1.0 / K
    return c1, np.zeros(d)


def random_cap_data(torus: RescaledTorus, center, radius: float, count: int,
                    rng: np.random.Generator) -> SpectralData:
    """Up to ``count`` random atoms of the lattice inside a ball, unimodular amplitudes."""
    idx = lattice_indices(torus, Ball(radius, tuple(center)))
    if len(idx) > count:
        idx = idx[np.sort(rng.choice(len(idx), count, replace=False))]
    return random_data(torus, idx, rng)


@dataclass
class LemmaReport:
    ratio: float
    lhs: float
    rhs: float
    pieces: tuple[int, int]
    bound: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def normalized(self) -> float:
        return self.ratio / self.bound


def _check_cap(data: SpectralData, center, radius, what):
    if len(data) == 0:
        return
    dist = np.sqrt(np.sum((data.frequencies - np.asarray(center)) ** 2, axis=-1))
    if np.any(dist > radius * (1 + 1e-12)):
        raise ValueError(f"{what} is not supported in its cap")


def _decoupled_ratio(f1, f2, pieces1, pieces2, weight: WeightSpec):
    p1 = [Wave(p) for p in split_by_pieces(f1, pieces1) if len(p)]
    p2 = [Wave(p) for p in split_by_pieces(f2, pieces2) if len(p)]
    lhs, rhs = integrate_terms([product_term(Wave(f1), Wave(f2)), [p1, p2]], weight)
    return lhs, rhs, (len(p1), len(p2))


def ball_weight(R: float, d: int, kind: str = DECAY) -> WeightSpec:
    return WeightSpec(SpaceTimeRegion.ball(R, d), kind)


def lemma51_check(f1: SpectralData, f2: SpectralData, v: float, R: float, K: float | None = None,
                  weight_kind: str = DECAY) -> LemmaReport:
    """Plate decoupling: ``int |Ef1 Ef2|^2 w`` over the plate-pair sum."""
    if not R > v ** -2:
        raise ValueError("need R > v^-2")
    d = f1.d
    c1, c2 = transversal_centers(d, K)
    _check_cap(f1, c1, v, "f1")
    _check_cap(f2, c2, v, "f2")
    plates1 = cover_cap_with_plates(Cap(tuple(c1), v))
    plates2 = cover_cap_with_plates(Cap(tuple(c2), v))
    lhs, rhs, n = _decoupled_ratio(f1, f2, plates1, plates2, ball_weight(R, d, weight_kind))
    bound = 1.0 if K is None else float(K)
    return LemmaReport(lhs / rhs, lhs, rhs, n, bound)


def lemma53_check(f1: SpectralData, f2: SpectralData, v: float, R: float,
                  weight_kind: str = DECAY) -> LemmaReport:
    """Cap decoupling at radius ``v^2``, normalized by ``v^{-(d-1)}``."""
    if not R >= v ** -2:
        raise ValueError("need R >= v^-2")
    d = f1.d
    c1, c2 = transversal_centers(d)
    _check_cap(f1, c1, v, "f1")
    _check_cap(f2, c2, v, "f2")
    caps1 = cover_with_caps(v, v * v, c1)
    caps2 = cover_with_caps(v, v * v, c2)
    lhs, rhs, n = _decoupled_ratio(f1, f2, caps1, caps2, ball_weight(R, d, weight_kind))
    return LemmaReport(lhs / rhs, lhs, rhs, n, v ** (-(d - 1)))


def cor55_check(f1: SpectralData, f2: SpectralData, v: float, delta: float, R: float,
                weight_kind: str = DECAY) -> LemmaReport:
    """Cap decoupling at radius ``delta``; reports the exponent ``C`` that makes the bound tight."""
    if not (1.0 / R <= delta * (1 + 1e-12) and delta <= v * (1 + 1e-12)):
        raise ValueError("need 1/R <= delta <= v")
    d = f1.d
    c1, c2 = transversal_centers(d)
    _check_cap(f1, c1, v, "f1")
    _check_cap(f2, c2, v, "f2")
    caps1 = cover_with_caps(v, delta, c1)
    caps2 = cover_with_caps(v, delta, c2)
    lhs, rhs, n = _decoupled_ratio(f1, f2, caps1, caps2, ball_weight(R, d, weight_kind))
    ratio = lhs / rhs
    base = (v / delta) ** (d - 1)
    logf = abs(math.log(delta) / math.log(v))
    if logf > 1 + 1e-12:
        C = max(0.0, math.log(ratio / base) / math.log(logf))
    else:
        C = 0.0
    return LemmaReport(ratio, lhs, rhs, n, base * logf ** C, {"C_fit": C, "base": base, "log_factor": logf})


@dataclass
class RescaleReport:
    before: float
    after: float
    caps: tuple[int, int]
    region: SpaceTimeRegion
    rescaled_region: SpaceTimeRegion

    @property
    def quotient(self) -> float:
        return self.before / self.after


def _cap_decoupled_ratio(f1, f2, pieces1, pieces2, weight: WeightSpec, evaluator: str = "grid") -> float:
    """``||F1 F2||_{L^2_avg} / prod_j (sum_theta ||F_{j,theta}||^2_{L^4_avg})^{1/2}``."""
    m = weight.measure
    p1 = [p for p in split_by_pieces(f1, pieces1) if len(p)]
    p2 = [p for p in split_by_pieces(f2, pieces2) if len(p)]
    pairs = [(f1, f2)] + [(p, p) for p in p1 + p2]
    if evaluator == "grid":
        vals = integrate_terms([product_term(Wave(a), Wave(b)) for a, b in pairs], weight)
    elif evaluator == "pairsum":
        vals = np.array([pair_sum_bilinear_sq(a, b, weight) for a, b in pairs])
    else:
        raise ValueError(f"unknown evaluator {evaluator!r}")
    quart = np.sqrt(np.maximum(vals[1:], 0.0) / m)
    rhs = math.sqrt(float(np.sum(quart[:len(p1)])) * float(np.sum(quart[len(p1):])))
    return math.sqrt(max(vals[0], 0.0) / m) / rhs


def rescaling_invariance_check(h1: SpectralData, h2: SpectralData, r: float, region: SpaceTimeRegion,
                  weight_kind: str = "indicator") -> RescaleReport:
    """Averaged cap-decoupling ratio before and after sending the cap of radius ``r`` to unit scale.

    Caps of radius ``1/lam`` around the origin are transported by the same map,
    so both sides use the same decomposition.  The two sides are evaluated by
    different routes: period-cell quadrature before, full-space pair sums after.
    """
    torus = h1.torus
    zero = np.zeros(torus.d, dtype=np.int64)
    g1, rmap = parabolic_rescale(h1, zero, r)
    g2, _ = parabolic_rescale(h2, zero, r)
    caps = cover_with_caps(r, 1.0 / torus.lam, d=torus.d, single_atom=True)
    caps_after = [rmap.cap(c) for c in caps]
    region_after = rmap.region(region)
    before = _cap_decoupled_ratio(h1, h2, caps, caps, WeightSpec(region, weight_kind), "grid")
    after = _cap_decoupled_ratio(g1, g2, caps_after, caps_after, WeightSpec(region_after, weight_kind),
                                 "pairsum")
    return RescaleReport(before, after, (len(caps), len(caps_after)), region, region_after)


# -------------------------------------------------------- best constants

def window_indices(torus: RescaledTorus, annulus: Annulus, direction, max_atoms: int) -> np.ndarray:
    """Atoms of the annulus inside the largest ball around ``N * direction`` holding <= max_atoms."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    center = annulus.N * direction
    full = lattice_indices(torus, annulus)
    if len(full) <= max_atoms:
        return full
    dist = np.sqrt(np.sum((torus.frequencies(full) - center) ** 2, axis=-1))
    order = np.argsort(dist, kind="stable")
    return full[np.sort(order[:max_atoms])]


@dataclass
class HermitianKernel:
    """``lhs^2 = c^H H c`` with the other factor frozen."""

    matrix: np.ndarray


def _pair_quadruples(phi1: SpectralData, phi2: SpectralData):
    tab = pair_table(phi1.with_coeffs(np.ones(len(phi1))), phi2.with_coeffs(np.ones(len(phi2))), PROPAGATOR)
    p, q = resonant_pairs(tab)
    tau = window_factor(tab.omega[p] - tab.omega[q], 0.0, 1.0)
    scale = phi1.torus.measure * abs(tab.coeff[0]) ** 2 if len(tab.coeff) else 0.0
    return tab.a[p], tab.b[p], tab.a[q], tab.b[q], tau * scale


def _kernel(quads, other: np.ndarray, n_self: int, self_first: bool) -> np.ndarray:
    a, b, a2, b2, tau = quads
    if self_first:
        i, j, u, v = a, a2, b, b2
    else:
        i, j, u, v = b, b2, a, a2
    vals = other[u] * np.conj(other[v]) * tau
    Q = np.zeros(n_self * n_self, dtype=complex)
    np.add.at(Q, i * n_self + j, vals)
    # lhs^2 = sum c_i Q_ij conj(c_j) = c^H conj(Q) c
    return np.conj(Q.reshape(n_self, n_self))


def _top_eigvec(H: np.ndarray, start: np.ndarray, iterations: int, tol: float = 1e-10):
    v = start / np.linalg.norm(start)
    val = float(np.real(np.conj(v) @ H @ v))
    for _ in range(iterations):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w = w / nw
        new = float(np.real(np.conj(w) @ H @ w))
        v = w
        if abs(new - val) <= tol * max(abs(new), 1e-300):
            val = new
            break
        val = new
    return v, val


@dataclass
class OptimizeResult:
    report: EstimateReport
    phi1: SpectralData
    phi2: SpectralData
    history: list[float]
    converged: bool
    best_trial_ratio: float


def maximize_ratio(config: EstimateConfig, restarts: int = 4, iterations: int = 30, seed: int = 0,
                   max_atoms: int = 96, supports: tuple[np.ndarray, np.ndarray] | None = None,
                   rel_gain: float = 1e-4, power_steps: int = 200) -> OptimizeResult:
    """Alternating top-eigenvector search for the largest torus ratio over fixed supports."""
    if restarts < 1:
        raise ValueError("need at least one restart")
    torus = config.torus
    if supports is None:
        s1 = window_indices(torus, config.annulus(config.N1), np.eye(config.d)[0], max_atoms)
        s2 = window_indices(torus, config.annulus(config.N2), np.eye(config.d)[0], max_atoms)
    else:
        s1, s2 = supports
    base1 = SpectralData(torus, s1, np.ones(len(s1)))
    base2 = SpectralData(torus, s2, np.ones(len(s2)))
    quads = _pair_quadruples(base1, base2)
    alpha_prod = float(np.prod(config.alphas))
    Dfac = D_factor(config.lam, config.N1, config.N2, config.d)
    best = None
    best_trial = 0.0
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        c1 = np.exp(2j * np.pi * rng.random(len(s1)))
        c2 = np.exp(2j * np.pi * rng.random(len(s2)))
        c1 /= np.linalg.norm(c1)
        c2 /= np.linalg.norm(c2)
        start = thm11_sides(SpectralData(torus, s1, c1), SpectralData(torus, s2, c2), config).ratio
        best_trial = max(best_trial, start)
        hist = [start]
        converged = False
        val = 0.0
        for it in range(iterations):
            H1 = _kernel(quads, c2, len(s1), True)
            c1, _ = _top_eigvec(H1, c1, power_steps)
            H2 = _kernel(quads, c1, len(s2), False)
            c2, val = _top_eigvec(H2, c2, power_steps)
            ratio = math.sqrt(max(val, 0.0)) / (alpha_prod * math.sqrt(Dfac))
            gain = (ratio - hist[-1]) / max(hist[-1], 1e-300)
            hist.append(ratio)
            if 0 <= gain < rel_gain:
                converged = True
                break
        phi1 = SpectralData(torus, s1, c1)
        phi2 = SpectralData(torus, s2, c2)
        rep = thm11_sides(phi1, phi2, config, seed=r)
        if best is None or rep.ratio > best.report.ratio * (1 + 1e-12):
            best = OptimizeResult(rep, phi1, phi2, hist, converged, best_trial)
    best.best_trial_ratio = best_trial
    return best


# ------------------------------------------------------------------ sweeps

def estimate_cost(config: EstimateConfig, max_atoms: int, trials: int, restarts: int) -> float:
    """Rough operation count: resonant quadruples times evaluations."""
    return float(trials + 30 * restarts) * max_atoms ** 3


def task_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def trial_report(config: EstimateConfig, seed: int, point: int, trial: int, max_atoms: int) -> EstimateReport:
    rng = task_rng(seed, point, trial)
    torus = config.torus
    direction = rng.standard_normal(config.d)
    s1 = window_indices(torus, config.annulus(config.N1), direction, max_atoms)
    s2 = window_indices(torus, config.annulus(config.N2), rng.standard_normal(config.d), max_atoms)
    phi1 = random_data(torus, s1, rng)
    phi2 = random_data(torus, s2, rng)
    derived = int(np.random.SeedSequence(seed, spawn_key=(point, trial)).generate_state(1, np.uint64)[0])
    return thm11_sides(phi1, phi2, config, seed=derived)


@dataclass
class SweepResult:
    reports: list[EstimateReport]
    best: dict
    fits: dict
    optimized: dict


def sweep_and_fit(configs: Sequence[EstimateConfig], trials: int, seed: int = 0, optimize: bool = True,
                  restarts: int = 2, iterations: int = 20, max_atoms: int = 64, threads: int = 1,
                  cost_cap: float = 5e10, override_cost_cap: bool = False) -> SweepResult:
    """Per grid point: random trials plus optional optimizer; slope fits of the best ratios."""
    if not configs:
        raise ValueError("empty sweep grid")
    cost = sum(estimate_cost(c, max_atoms, trials, restarts if optimize else 0) for c in configs)
    if cost > cost_cap and not override_cost_cap:
        raise CostCapExceeded(f"estimated cost {cost:.3g} exceeds cap {cost_cap:.3g}")
    tasks = [(i, t) for i in range(len(configs)) for t in range(trials)]

    def run(task):
        i, t = task
        return trial_report(configs[i], seed, i, t, max_atoms)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, tasks))
    else:
        reports = [run(t) for t in tasks]
    best, optimized = {}, {}
    for i, c in enumerate(configs):
        vals = [r.ratio for (j, _), r in zip(tasks, reports) if j == i]
        best[i] = max(vals) if vals else 0.0
        if optimize:
            res = maximize_ratio(c, restarts=restarts, iterations=iterations, seed=seed + i,
                                 max_atoms=max_atoms)
            optimized[i] = res.report.ratio
            best[i] = max(best[i], res.report.ratio)
    fits = {}
    if len(configs) >= 4:
        ys = [best[i] for i in range(len(configs))]
        Ds = [D_factor(c.lam, c.N1, c.N2, c.d) for c in configs]
        if len(set(Ds)) > 1:
            fits["D"] = fit_slope(Ds, ys, "D", 0.0)
        n2 = [c.N2 for c in configs]
        if len(set(n2)) > 1:
            fits["N2"] = fit_slope(n2, ys, "N2", 0.0)
    return SweepResult(reports, best, fits, optimized)
