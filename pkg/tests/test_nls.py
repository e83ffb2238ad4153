import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irrtorus.lattice import make_torus
from irrtorus.nls import (HEADER, BlowupError, NlsState, SolverOptions, dealias_mask, diagnostics,
                          energy_drift_order, linear_step, load_checkpoint, nonlinear_step, phase_error_order,
                          plane_wave, quartic_integral, run, save_checkpoint, smooth_initial, state_from_data,
                          step_count, strang_step)
from irrtorus.wavefield import SpectralData, evolve


def test_state_validation():
    with pytest.raises(ValueError):
        NlsState(0.8, np.zeros((12, 16)))
    with pytest.raises(BlowupError):
        NlsState(0.8, np.full((8, 8), np.nan))


def test_dt_zero_is_identity():
    s = smooth_initial(0.8, (16, 16), seed=2)
    assert linear_step(s, 0.0) is s and nonlinear_step(s, 0.0) is s


@pytest.mark.parametrize("alpha, k", [(1.0, (1, 0)), (0.8, (2, -1)), (0.55, (0, 3))])
def test_single_harmonic_linear_phase(alpha, k):
    s = plane_wave(alpha, k, 0.7, (16, 16))
    out = linear_step(s, 0.013)
    kk = np.array(k) / np.array([1.0, alpha])
    expected = s.u * np.exp(-1j * (2 * np.pi) ** 2 * (kk @ kk) * 0.013)
    assert np.allclose(out.u, expected, atol=1e-13)


@given(a=st.floats(0.0, 0.1), b=st.floats(0.0, 0.1))
def test_linear_semigroup(a, b):
    s = smooth_initial(0.7, (16, 16), seed=1)
    assert np.allclose(linear_step(linear_step(s, a), b).u, linear_step(s, a + b).u, atol=1e-12)


@pytest.mark.parametrize("focusing, sign", [(False, 1.0), (True, -1.0)])
def test_constant_field_phase(focusing, sign):
    s = NlsState(0.9, np.full((8, 8), 1.5 + 0j))
    out = nonlinear_step(s, 0.1, focusing)
    assert np.allclose(out.u, 1.5 * np.exp(-1j * sign * 2.25 * 0.1), atol=1e-15)


def test_dealias_mask():
    m = dealias_mask((16, 8))
    assert m.shape == (16, 8)
    assert m.sum() == 11 * 5


@pytest.mark.parametrize("alpha, c, k", [(1.0, 1.0, (0, 0)), (0.8, 0.5 + 0.5j, (1, 2)), (0.6, 2.0, (-3, 1))])
def test_diagnostics_plane_wave(alpha, c, k):
    s = plane_wave(alpha, k, c, (16, 16))
    d = diagnostics(s, s=2.0)
    kk = np.array(k) / np.array([1.0, alpha])
    k2 = (2 * np.pi) ** 2 * (kk @ kk)
    a2 = abs(c) ** 2
    assert d.mass == pytest.approx(a2 * alpha, rel=1e-13)
    assert d.energy == pytest.approx((0.5 * k2 * a2 + 0.25 * a2 ** 2) * alpha, rel=1e-12)
    assert d.hs == pytest.approx(math.sqrt((1 + k2) ** 2 * a2 * alpha), rel=1e-12)
    with pytest.raises(ValueError):
        diagnostics(s, s=-1.0)


def test_quartic_integral_exact():
    s = smooth_initial(0.8, (16, 16), seed=4, band=4)
    assert quartic_integral(s.u, s.measure, pad=2) == pytest.approx(quartic_integral(s.u, s.measure, pad=4),
                                                                    rel=1e-12)


def test_state_from_data_matches_evolve():
    t = make_torus(2, (0.8,), 1.0)
    data = SpectralData(t, [[1, 0], [-2, 3], [0, -1]], [1.0, 0.5j, -0.3])
    s = state_from_data(data, (16, 16))
    assert np.allclose(s.u.ravel(), evolve(data, s.points(), np.zeros(256)), atol=1e-13)
    with pytest.raises(ValueError):
        state_from_data(data, (4, 4))
    with pytest.raises(ValueError):
        state_from_data(SpectralData(make_torus(2, (0.8,), 2.0), [[1, 0]], [1.0]), (16, 16))


def test_linear_run_matches_spectral_evolution():
    t = make_torus(2, (0.8,), 1.0)
    rng = np.random.default_rng(3)
    m = np.array([(a, b) for a in range(-3, 4) for b in range(-3, 4)])
    data = SpectralData(t, m, rng.standard_normal(len(m)) + 1j * rng.standard_normal(len(m)))
    s = state_from_data(data, (16, 16), dt=1e-2)
    out = run(s, 0.5, SolverOptions(nonlinear=False)).state
    ref = evolve(data, s.points(), np.full(256, 0.5))
    assert np.max(np.abs(out.u.ravel() - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_mass_conserved():
    s = smooth_initial(0.8, (32, 32), seed=0, dt=1e-3)
    rep = run(s, 1.0, SolverOptions(cadence=50))
    assert rep.mass_drift < 1e-9
    assert not rep.aborted


def test_reversibility():
    s = smooth_initial(0.8, (32, 32), seed=5, dt=2e-3)
    fwd = run(s, 0.2).state
    back = run(NlsState(fwd.alpha, fwd.u, fwd.t, -fwd.dt), -0.2).state
    assert np.max(np.abs(back.u - s.u)) < 1e-6
    assert back.t == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.8, 1.0])
def test_energy_drift_second_order(alpha):
    s = smooth_initial(alpha, (32, 32), seed=0)
    slope, drifts = energy_drift_order(s, 0.25, [2e-3, 1e-3, 5e-4, 2.5e-4])
    assert slope == pytest.approx(2.0, abs=0.2)
    assert drifts[0] > drifts[-1]


def test_plane_wave_split_exact():
    # the splitting is exact on plane waves, so the phase error is at roundoff
    slope, errs = phase_error_order(0.8, (1, 1), 1.0, [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    assert max(errs) < 1e-10


def test_blowup_guard():
    s = plane_wave(0.8, (1, 0), 2.0, (8, 8), dt=1e-2)
    with pytest.raises(BlowupError):
        strang_step(s, SolverOptions(amplitude_guard=1.0))
    rep = run(s, 0.1, SolverOptions(amplitude_guard=1.0))
    assert rep.aborted and rep.state is s


@pytest.mark.parametrize("T, dt, n", [(1.0, 0.25, 4), (0.0, 0.1, 0), (-0.5, -0.1, 5)])
def test_step_count(T, dt, n):
    assert step_count(T, dt) == n


@pytest.mark.parametrize("T, dt", [(1.0, 0.3), (1.0, 0.0), (1.0, -0.25)])
def test_step_count_rejects(T, dt):
    with pytest.raises(ValueError):
        step_count(T, dt)


def test_zero_data_stays_zero():
    s = NlsState(0.8, np.zeros((16, 16), dtype=complex), dt=0.01)
    rep = run(s, 0.1)
    assert np.all(rep.state.u == 0) and rep.mass_drift == 0.0


def test_checkpoint_round_trip(tmp_path):
    s = smooth_initial(0.8, (16, 8), seed=9)
    s = NlsState(s.alpha, s.u, 0.125, 1e-3)
    path = tmp_path / "c.nls"
    save_checkpoint(path, s)
    raw = path.read_bytes()
    assert len(raw) == HEADER.size + 8 * 128 == 48 + 1024
    assert raw[:8] == b"IRRNLS01"
    assert struct.unpack_from("<I", raw, 8)[0] == 0x01020304
    back = load_checkpoint(path)
    assert (back.alpha, back.t, back.dt, back.resolution) == (0.8, 0.125, 1e-3, (16, 8))
    assert np.allclose(back.u, s.u, atol=1e-6)


@pytest.mark.parametrize("mutate", ["magic", "size", "short"])
def test_checkpoint_rejects(tmp_path, mutate):
    path = tmp_path / "c.nls"
    save_checkpoint(path, smooth_initial(0.8, (8, 8)))
    raw = bytearray(path.read_bytes())
    if mutate == "magic":
        raw[0:1] = b"X"
    elif mutate == "size":
        raw = raw[:-8]
    else:
        raw = raw[:20]
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_checkpoint(path)
