import numpy as np
import pytest
from hypothesis import given, strategies as st

from irrtorus.lattice import Annulus, Ball, lattice_indices, make_torus
from irrtorus.wavefield import (SpectralData, TimeCutoff, bridge_point_map, evolve, evolve_grid, extend,
                                extend_grid, inverse_bridge, mass_over_time, parabolic_rescale_bridge,
                                random_data)


def reversed_sum(data, x, t, sign, pref, omega_scale):
    """Order-reversed re-implementation of the atomic sums."""
    out = np.zeros(len(x), dtype=complex)
    k = data.frequencies
    for j in range(len(data) - 1, -1, -1):
        om = omega_scale * (k[j] @ k[j])
        out += data.coeffs[j] * np.exp(1j * (sign * 2 * np.pi * x @ k[j] - om * t))
    return pref * out


def sample(torus, region, count, rng):
    idx = lattice_indices(torus, region)
    if len(idx) > count:
        idx = idx[np.sort(rng.choice(len(idx), count, replace=False))]
    return random_data(torus, idx, rng, "gaussian")


@pytest.mark.parametrize("lam", [1.0, 2.0, 3.0])
def test_single_atom_modulus(lam):
    t = make_torus(2, (0.8,), lam)
    data = SpectralData(t, [[1, 2]], [1.0])
    x = np.random.default_rng(0).random((10, 2))
    np.testing.assert_allclose(np.abs(evolve(data, x, np.linspace(0, 1, 10))), lam ** -1.0, rtol=1e-14)
    np.testing.assert_allclose(np.abs(extend(data, x, np.linspace(0, 1, 10))), 1.0, rtol=1e-14)


def test_zero_data():
    t = make_torus(2, (0.8,), 1.0)
    data = SpectralData(t, [[1, 0], [0, 1]], [0.0, 0.0])
    assert np.all(evolve(data, np.ones((3, 2)), np.ones(3)) == 0)


def test_two_atoms_at_origin():
    t = make_torus(2, (1.0,), 1.0)
    data = SpectralData(t, [[1, 0], [0, 1]], [0.3 + 1j, -2.0])
    assert evolve(data, np.zeros((1, 2)), np.zeros(1))[0] == pytest.approx(-1.7 + 1j, abs=1e-15)


def test_direct_sum_vs_reversed(rng):
    t = make_torus(2, (0.83,), 2.0)
    data = sample(t, Ball(2.0), 12, rng)
    x = rng.random((20, 2)) * 4
    tt = rng.random(20)
    np.testing.assert_allclose(evolve(data, x, tt), reversed_sum(data, x, tt, 1, 0.5, (2 * np.pi) ** 2),
                               rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(extend(data, x, tt), reversed_sum(data, x, tt, -1, 1.0, 2 * np.pi),
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("fn, grid", [(evolve, evolve_grid), (extend, extend_grid)])
def test_grid_matches_direct(fn, grid, rng):
    t = make_torus(2, (0.71,), 1.0)
    data = sample(t, Ball(3.0), 8, rng)
    times = np.array([0.0, 0.137, 0.9])
    g = grid(data, times)
    pts = g.points()
    for j, tt in enumerate(times):
        ref = fn(data, pts, np.full(len(pts), tt))
        err = np.max(np.abs(g.values[j].ravel() - ref)) / np.max(np.abs(ref))
        assert err < 1e-10


def test_grid_resolution_guard():
    data = SpectralData(make_torus(2, (0.9,), 1.0), [[3, 0]], [1.0])
    with pytest.raises(ValueError):
        evolve_grid(data, [0.0], (6, 1))


def test_t0_slice_is_synthesis():
    t = make_torus(2, (1.0,), 1.0)
    data = SpectralData(t, [[1, 0], [0, -1]], [2.0, 1j])
    g = evolve_grid(data, [0.0], (4, 4))
    x = g.points()
    ref = 2 * np.exp(2j * np.pi * x[:, 0]) + 1j * np.exp(-2j * np.pi * x[:, 1])
    np.testing.assert_allclose(g.values[0].ravel(), ref, atol=1e-14)


def test_conjugate_symmetric_is_real():
    t = make_torus(2, (0.75,), 2.0)
    data = SpectralData(t, [[1, 2], [-1, -2], [0, 0]], [1 + 2j, 1 - 2j, 0.5])
    x = np.random.default_rng(1).random((30, 2))
    assert np.max(np.abs(extend(data, x, np.zeros(30)).imag)) < 1e-13


@given(lam=st.sampled_from([1.0, 2.0]), alpha=st.floats(0.5, 1.0), seed=st.integers(0, 10 ** 6))
def test_mass_conserved(lam, alpha, seed):
    rng = np.random.default_rng(seed)
    t = make_torus(2, (alpha,), lam)
    data = sample(t, Ball(2.0), 10, rng)
    m = mass_over_time(data, np.linspace(0, 3, 7))
    np.testing.assert_allclose(m, data.function_norm(), rtol=1e-10)


@given(seed=st.integers(0, 10 ** 6), a=st.complex_numbers(max_magnitude=3), b=st.complex_numbers(max_magnitude=3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    t = make_torus(2, (0.9,), 1.0)
    idx = lattice_indices(t, Ball(2.0))
    p = random_data(t, idx, rng)
    q = random_data(t, idx, rng)
    x, tt = rng.random((5, 2)), rng.random(5)
    lhs = evolve(p.scaled(a) + q.scaled(b), x, tt)
    rhs = a * evolve(p, x, tt) + b * evolve(q, x, tt)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * len(idx))


@pytest.mark.parametrize("lam, N1, alpha", [(1.0, 2.0, 0.8), (2.0, 4.0, 0.6)])
def test_extension_periodicity(lam, N1, alpha, rng):
    tor = make_torus(2, (alpha,), lam)
    h = parabolic_rescale_bridge(sample(tor, Annulus(N1), 8, rng), N1)
    period = lam * N1 * np.array([1.0, alpha])
    x = rng.random((16, 2)) * period
    tt = rng.random(16)
    for shift in (np.array([1, 0]), np.array([0, 1]), np.array([2, -3])):
        np.testing.assert_allclose(extend(h, x + shift * period, tt), extend(h, x, tt), atol=1e-10)


@pytest.mark.parametrize("lam, N1", [(1.0, 2.0), (2.0, 4.0), (1.0, 8.0)])
def test_bridge_pointwise(lam, N1, rng):
    tor = make_torus(2, (0.77,), lam)
    phi = sample(tor, Annulus(N1), 10, rng)
    h = parabolic_rescale_bridge(phi, N1)
    x, tt = rng.random((12, 2)) * 3, rng.random(12)
    y, s = bridge_point_map(x, tt, N1)
    np.testing.assert_allclose(evolve(phi, x, tt), extend(h, y, s), atol=1e-10)


def test_bridge_identity_and_round_trip(rng):
    tor = make_torus(2, (0.9,), 2.0)
    phi = sample(tor, Annulus(1.0), 6, rng)
    h = parabolic_rescale_bridge(phi, 1.0)
    np.testing.assert_allclose(h.coeffs, phi.coeffs / 2.0, rtol=1e-15)
    back = inverse_bridge(parabolic_rescale_bridge(phi, 4.0, c2=8.0), 4.0, 2.0)
    np.testing.assert_array_equal(back.indices, phi.indices)
    np.testing.assert_allclose(back.coeffs, phi.coeffs, rtol=1e-15)


def test_bridge_support_violation():
    tor = make_torus(2, (1.0,), 1.0)
    with pytest.raises(ValueError):
        parabolic_rescale_bridge(SpectralData(tor, [[9, 0]], [1.0]), 2.0)


def test_spectral_data_validation():
    tor = make_torus(2, (1.0,), 1.0)
    with pytest.raises(ValueError):
        SpectralData(tor, [[1, 0], [1, 0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        SpectralData(tor, [[1, 0]], [np.nan])


def test_function_norm_by_quadrature(rng):
    tor = make_torus(2, (0.65,), 1.0)
    data = sample(tor, Ball(3.0), 9, rng)
    g = evolve_grid(data, [0.0])
    quad = np.sqrt(np.mean(np.abs(g.values[0]) ** 2) * tor.measure)
    assert quad == pytest.approx(data.function_norm(), rel=1e-12)


@pytest.mark.parametrize("kind, width", [("sharp", 1.0), ("bump", 1.0), ("bump", 0.5)])
def test_cutoff_support(kind, width):
    eta = TimeCutoff(kind, width)
    t = np.linspace(-1, 2, 301)
    lo, hi = eta.support
    assert 0 <= lo and hi <= 1
    assert np.all(eta(t)[(t < lo) | (t > hi)] == 0)
