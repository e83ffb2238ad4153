"""Sharpness examples for the decoupling estimate and their scaling exponents.

Three families of unit-amplitude lattice data on ``Lambda_{lam N1}``:

``ball-pair``      f1 on ``|xi| <= N2/N1``, f2 its translate by ``e_1``
``d2-line-pair``   ``xi_1 = 1`` resp. ``xi_1 = 0`` with ``|xi_2| <= 1/N1`` (d = 2)
``d3-plate-pair``  ``xi_1 = 1`` resp. ``xi_1 = 0`` with ``|xi'| <= N2/N1`` (d >= 3)

Measured squared norms are compared with monomials ``lam^a N1^b N2^c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lab import CostCapExceeded, SlopeFit, fit_slope
from .lattice import Ball, RescaledTorus, TorusShape, lattice_indices
from .norms import Wave, integrate_terms, plan_integration, product_term
from .wavefield import SpectralData, extend
from .weights import DECAY, SpaceTimeRegion, WeightSpec

EXAMPLES = ("ball-pair", "d2-line-pair", "d3-plate-pair")


def predicted_exponents(example: str, d: int) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    """Exponents of ``(lam, N1, N2)`` for the squared left and right sides."""
    if example == "ball-pair":
        return (5 * d, 2 * d + 1, 3 * d - 1), (4 * d, 2 * d + 2, 2 * d)
    if example == "d2-line-pair":
        return (7, 6, 0), (6, 6, 0)
    if example == "d3-plate-pair":
        return (5 * d - 3, 2 * d + 2, 3 * d - 5), (4 * d - 2, 2 * d + 2, 2 * d - 2)
    raise ValueError(f"unknown example {example!r}")


@dataclass(frozen=True)
class ExtremizerSpec:
    example: str
    d: int = 2
    lam: float = 1.0
    N1: float = 4.0
    N2: float = 1.0
    alphas: tuple[float, ...] = ()
    weight_kind: str = DECAY

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}")
        if self.example == "d2-line-pair" and self.d != 2:
            raise ValueError("the line pair lives in d = 2")
        if self.example == "d3-plate-pair" and self.d < 3:
            raise ValueError("the plate pair needs d >= 3")
        if not self.N1 >= self.N2 >= 1 or not self.lam >= 1:
            raise ValueError("need lam >= 1 and N1 >= N2 >= 1")
        object.__setattr__(self, "alphas", TorusShape(self.d, tuple(self.alphas)).alphas)
        scale = self.lam * self.N1
        if abs(scale - round(scale)) > 1e-9:
            raise ValueError("lam * N1 must be an integer so that e_1 is a lattice point")

    @property
    def torus(self) -> RescaledTorus:
        return RescaledTorus(TorusShape(self.d, self.alphas), self.lam * self.N1)

    @property
    def exponents(self):
        return predicted_exponents(self.example, self.d)

    def monomial(self, which: str = "lhs") -> float:
        a, b, c = self.exponents[0 if which == "lhs" else 1]
        return self.lam ** a * self.N1 ** b * self.N2 ** c

    def omega_region(self) -> SpaceTimeRegion:
        side = (self.lam * self.N1) ** 2
        return SpaceTimeRegion.box((0.0, self.N1 ** 2), (0.0,) * self.d, (side,) * self.d)


def _slice_indices(torus: RescaledTorus, first: int, radius: float) -> np.ndarray:
    """Atoms with ``m_1 = first`` and ``|(xi_2, ..., xi_d)| <= radius``."""
    L = torus.lengths
    if torus.d == 2:
        top = int(math.floor(radius * L[1] * (1 + 1e-12)))
        rest = np.arange(-top, top + 1)[:, None]
    else:
        # enumerate the transverse ball on its bounding index box
        tops = [int(math.floor(radius * Li * (1 + 1e-12))) for Li in L[1:]]
        grids = np.meshgrid(*[np.arange(-t, t + 1) for t in tops], indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=-1)
        k = rest / L[1:]
        rest = rest[np.sum(k * k, axis=-1) <= radius ** 2 * (1 + 1e-12)]
    out = np.concatenate([np.full((len(rest), 1), first), rest], axis=1)
    return out.astype(np.int64)


def build(spec: ExtremizerSpec) -> tuple[SpectralData, SpectralData]:
    torus = spec.torus
    e1 = int(round(spec.lam * spec.N1))
    if spec.example == "ball-pair":
        idx = lattice_indices(torus, Ball(spec.N2 / spec.N1))
        shifted = idx.copy()
        shifted[:, 0] += e1
        return (SpectralData(torus, idx, np.ones(len(idx))),
                SpectralData(torus, shifted, np.ones(len(shifted))))
    radius = 1.0 / spec.N1 if spec.example == "d2-line-pair" else spec.N2 / spec.N1
    i1 = _slice_indices(torus, e1, radius)
    i2 = _slice_indices(torus, 0, radius)
    return SpectralData(torus, i1, np.ones(len(i1))), SpectralData(torus, i2, np.ones(len(i2)))


@dataclass
class Measurement:
    spec: ExtremizerSpec
    lhs_sq: float
    rhs_sq: float
    atoms: tuple[int, int]
    measure: float
    extra: dict = field(default_factory=dict)

    @property
    def rhs_sq_avg(self) -> float:
        """Right side with averaged cap norms (each single-atom cap contributes 1)."""
        return self.rhs_sq / self.measure

    @property
    def lhs_over_monomial(self) -> float:
        return self.lhs_sq / self.spec.monomial("lhs")


def measure(spec: ExtremizerSpec, cost_cap: float = 2e10, override_cost_cap: bool = False,
            refine: int = 1) -> Measurement:
    """``int |Ef1 Ef2|^2 w_Omega`` and ``prod_j sum_theta ||Ef_{j,theta}||^2_{L^4(w_Omega)}``."""
    f1, f2 = build(spec)
    w = WeightSpec(spec.omega_region(), spec.weight_kind)
    terms = [product_term(Wave(f1), Wave(f2))]
    plan = plan_integration(terms, w, refine)
    cost = plan.cost * 4.0
    if cost > cost_cap and not override_cost_cap:
        raise CostCapExceeded(f"estimated cost {cost:.3g} exceeds cap {cost_cap:.3g}")
    lhs_sq = float(integrate_terms(terms, w, plan=plan)[0])
    m = w.measure
    # each cap holds one unit atom: ||E f_theta||_{L^4(w)}^2 = m^{1/2}
    rhs_sq = len(f1) * math.sqrt(m) * len(f2) * math.sqrt(m)
    return Measurement(spec, lhs_sq, rhs_sq, (len(f1), len(f2)), m,
                       {"grid": plan.shape, "time_nodes": len(plan.t)})


def origin_value(spec: ExtremizerSpec) -> float:
    f1, _ = build(spec)
    return float(abs(extend(f1, np.zeros((1, spec.d)), np.zeros(1))[0]))


@dataclass
class ScalingResult:
    lhs: SlopeFit
    rhs: SlopeFit
    measurements: list[Measurement]

    def passed(self, tol: float = 0.4) -> bool:
        return self.lhs.within(tol) and self.rhs.within(tol)

    @property
    def constant_spread(self) -> float:
        vals = [m.lhs_over_monomial for m in self.measurements]
        return max(vals) / min(vals)


AXES = {"lam": 0, "N1": 1, "N2": 2}


def verify_scaling(spec: ExtremizerSpec, axis: str, values, **kw) -> ScalingResult:
    """Slope of measured squared sides against one parameter, others held fixed."""
    values = list(values)
    if len(values) < 4:
        raise ValueError("need at least four sweep points")
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    meas = [measure(replace(spec, **{axis: v}), **kw) for v in values]
    lhs_pred, rhs_pred = spec.exponents
    k = AXES[axis]
    lf = fit_slope(values, [m.lhs_sq for m in meas], axis, lhs_pred[k])
    rf = fit_slope(values, [m.rhs_sq for m in meas], axis, rhs_pred[k])
    return ScalingResult(lf, rf, meas)
