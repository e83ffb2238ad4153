import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from irrtorus.weights import (DECAY, INDICATOR, RadialWeight, SpaceTimeRegion, WeightSpec, axis_profile,
                              axis_transform, tail_transform, time_nodes, weight_eval)

BOX = SpaceTimeRegion.box((0.0, 2.0), (0.0, -1.0), (3.0, 1.0))


def test_normalization_constant():
    # 1 / (1 + 2 int_0^3 (1+u)^-50 du), computed by quadrature
    assert WeightSpec(BOX).Z == pytest.approx(0.9607843137254901, rel=1e-13)


def test_interior_value_and_distance_diam():
    w = WeightSpec(BOX)
    Z = w.Z
    inside = weight_eval(w, [[1.0, 0.0]], 1.0)[0]
    assert inside == pytest.approx(Z ** 3, rel=1e-14)
    # one side length beyond the box along x1
    far = weight_eval(w, [[6.0, 0.0]], 1.0)[0]
    assert far == pytest.approx(Z ** 3 * 2.0 ** -50, rel=1e-12)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_profile_integrates_to_side(axis):
    w = WeightSpec(BOX)
    lo, hi = w.support()[axis]
    a, b = BOX.intervals[axis]
    val = sum(integrate.quad(lambda s: float(axis_profile(w, axis, s)), p, q, epsabs=0, epsrel=1e-12, limit=200)[0]
              for p, q in [(lo, a), (a, b), (b, hi)])
    assert val == pytest.approx(b - a, rel=1e-9)


def test_total_integral_is_measure():
    w = WeightSpec(BOX)
    sides = [integrate.quad(lambda s: float(axis_profile(w, k, s)), *w.support()[k], points=BOX.intervals[k],
                            limit=200)[0] for k in range(3)]
    assert np.prod(sides) == pytest.approx(BOX.measure, rel=1e-6)


@given(E=st.integers(2, 80), u=st.floats(0.01, 3.0))
def test_decay_monotone_in_E(E, u):
    r = SpaceTimeRegion.box((0.0, 1.0), (0.0,), (1.0,))
    lo = WeightSpec(r, DECAY, E)
    hi = WeightSpec(r, DECAY, E + 5)
    s = 1.0 + u
    # shape factor only: the normalization is compared separately
    assert axis_profile(hi, 0, s) / hi.Z <= axis_profile(lo, 0, s) / lo.Z


def test_indicator_profile():
    w = WeightSpec(BOX, INDICATOR)
    assert w.Z == 1.0
    np.testing.assert_array_equal(axis_profile(w, 1, [-0.5, 0.0, 3.0, 3.5]), [0, 1, 1, 0])


@pytest.mark.parametrize("E, c", [(50, 3.0), (10, 1.0), (4, 3.0)])
def test_tail_transform_vs_quad(E, c):
    for beta in (0.0, 0.7, 13.0, 250.0):
        re = integrate.quad(lambda v: (1 + v) ** -E, 0, c, weight="cos", wvar=beta, epsabs=1e-15, limit=400)[0]
        im = integrate.quad(lambda v: (1 + v) ** -E, 0, c, weight="sin", wvar=beta, epsabs=1e-15, limit=400)[0]
        assert tail_transform(E, c, np.array([beta]))[0] == pytest.approx(re + 1j * im, abs=1e-13)


@pytest.mark.parametrize("kind", [DECAY, INDICATOR])
def test_axis_transform_vs_quad(kind):
    w = WeightSpec(BOX, kind)
    lo, hi = w.support()[2]
    for f in (0.0, 0.3, 1.7):
        re = integrate.quad(lambda s: float(axis_profile(w, 2, s)) * np.cos(2 * np.pi * f * s), lo, hi,
                            points=(-1.0, 1.0), limit=400)[0]
        im = integrate.quad(lambda s: -float(axis_profile(w, 2, s)) * np.sin(2 * np.pi * f * s), lo, hi,
                            points=(-1.0, 1.0), limit=400)[0]
        assert axis_transform(w, 2, np.array([f]))[0] == pytest.approx(re + 1j * im, abs=1e-9)


@pytest.mark.parametrize("omega", [0.0, 5.0, 60.0])
def test_time_nodes_integrate_oscillation(omega):
    w = WeightSpec(BOX)
    t, wt = time_nodes(w, omega)
    got = np.sum(wt * np.cos(omega * t))
    ref = axis_transform(w, 0, np.array([omega / (2 * np.pi)]))[0].real
    assert got == pytest.approx(ref, abs=1e-10)


def test_radial_weight_mass():
    rw = RadialWeight(1.5, 3)
    val = integrate.quad(lambda r: float(rw([[r, 0, 0]])[0]) * 4 * np.pi * r * r, 0, 1.5 * 7, points=(1.5,),
                         limit=200)[0]
    assert val == pytest.approx(rw.measure, rel=1e-8)


def test_region_validation():
    with pytest.raises(ValueError):
        SpaceTimeRegion.box((1.0, 1.0), (0.0,), (1.0,))
    with pytest.raises(ValueError):
        WeightSpec(BOX, "gauss")


def test_ball_region_is_circumscribed_cube():
    b = SpaceTimeRegion.ball(2.0, 2)
    np.testing.assert_allclose(b.sides, [4.0, 4.0, 4.0])
    assert b.ball_measure == pytest.approx(4 / 3 * np.pi * 8)
