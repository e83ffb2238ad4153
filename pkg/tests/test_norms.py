import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irrtorus.caps import cover_with_caps, split_by_pieces
from irrtorus.lattice import Annulus, Ball, lattice_indices, make_torus
from irrtorus.norms import (Wave, bilinear_l2_grid, bilinear_l2_resonance, bilinear_sq, bridge_norm_identity,
                            check_l2_orthogonality, check_linfty_vs_lp, decoupling_ratio, integrate_terms,
                            lp_avg_norm, pair_sum_bilinear_sq, parallel_decoupling_check, partition_ok,
                            tile_box, window_factor)
from irrtorus.wavefield import SpectralData, TimeCutoff, random_data
from irrtorus.weights import DECAY, INDICATOR, SpaceTimeRegion, WeightSpec


def sample(torus, region, count, rng, kind="unimodular"):
    idx = lattice_indices(torus, region)
    if len(idx) > count:
        idx = idx[np.sort(rng.choice(len(idx), count, replace=False))]
    return random_data(torus, idx, rng, kind)


@pytest.mark.parametrize("lam, alpha", [(1.0, 1.0), (2.0, 0.8), (3.0, 0.55)])
def test_two_single_atoms(lam, alpha):
    t = make_torus(2, (alpha,), lam)
    a = SpectralData(t, [[2, 1]], [1.0])
    b = SpectralData(t, [[0, -1]], [1.0])
    ref = lam ** -2 * math.sqrt(t.measure)
    assert bilinear_l2_resonance(a, b) == pytest.approx(ref, rel=1e-14)
    assert bilinear_l2_grid(a, b) == pytest.approx(ref, rel=1e-12)


def test_degenerate_resonance_time_factor():
    t = make_torus(2, (1.0,), 1.0)
    a = SpectralData(t, [[1, 0], [0, 1]], [1.0, 1.0])
    b = SpectralData(t, [[0, 1], [1, 0]], [1.0, 1.0])
    # K = (1,1) is hit twice with equal phase speeds, (2,0) and (0,2) once
    assert bilinear_l2_resonance(a, b) == pytest.approx(math.sqrt(6.0), rel=1e-14)
    assert window_factor(np.array([0.0]), 0.0, 1.0)[0] == 1.0


def test_antipodal_atoms_vs_grid():
    t = make_torus(2, (0.83,), 1.0)
    a = SpectralData(t, [[3, 1], [-3, -1]], [1.0, 0.5j])
    b = SpectralData(t, [[1, 0], [-1, 0]], [2.0, 1.0])
    assert bilinear_l2_resonance(a, b) == pytest.approx(bilinear_l2_grid(a, b), rel=1e-6)


@given(seed=st.integers(0, 10 ** 6), lam=st.sampled_from([1.0, 2.0]), alpha=st.floats(0.5, 1.0),
       n1=st.integers(1, 20), n2=st.integers(1, 20))
def test_resonance_vs_grid(seed, lam, alpha, n1, n2):
    rng = np.random.default_rng(seed)
    t = make_torus(2, (alpha,), lam)
    a = sample(t, Annulus(4.0), n1, rng, "gaussian")
    b = sample(t, Annulus(2.0), n2, rng, "gaussian")
    assert bilinear_l2_resonance(a, b) == pytest.approx(bilinear_l2_grid(a, b), rel=1e-9)


def test_resonance_needs_sharp_cutoff(rng):
    t = make_torus(2, (0.9,), 1.0)
    a = sample(t, Annulus(2.0), 3, rng)
    with pytest.raises(ValueError):
        bilinear_l2_resonance(a, a, TimeCutoff("bump"))


def test_mixed_tori_rejected():
    a = SpectralData(make_torus(2, (0.9,), 1.0), [[1, 0]], [1.0])
    b = SpectralData(make_torus(2, (0.8,), 1.0), [[1, 0]], [1.0])
    with pytest.raises(ValueError):
        bilinear_l2_resonance(a, b)


@pytest.mark.parametrize("kind", [DECAY, INDICATOR])
@pytest.mark.parametrize("p", [2, 4])
def test_constant_field_norm(kind, p):
    w = WeightSpec(SpaceTimeRegion.box((0.0, 1.5), (0.0, 0.0), (2.0, 1.0)), kind)
    val = lp_avg_norm(lambda x, t: np.full(len(t), 2.5 + 0j), w, p, samples=12)
    assert val == pytest.approx(2.5, rel=1e-10)


@pytest.mark.parametrize("kind", [DECAY, INDICATOR])
def test_single_atom_l4(kind):
    t = make_torus(2, (0.7,), 4.0)
    h = SpectralData(t, [[3, -2]], [0.6 - 0.8j * 0.5])
    w = WeightSpec(SpaceTimeRegion.box((0.0, 2 * np.pi * 4), (0.0, 0.0), (4.0, 2.8)), kind)
    assert lp_avg_norm(h, w, 4) == pytest.approx(abs(h.coeffs[0]), rel=1e-8)


@pytest.mark.parametrize("kind", [DECAY, INDICATOR])
def test_l2_vs_pair_sum(kind, rng):
    t = make_torus(2, (0.77,), 2.0)
    f = sample(t, Ball(1.0), 6, rng, "gaussian")
    w = WeightSpec(SpaceTimeRegion.box((0.3, 2.1), (-0.5, 0.2), (1.7, 3.3)), kind)
    one = SpectralData(t, [[0, 0]], [1.0])
    ref = math.sqrt(pair_sum_bilinear_sq(f, one, w) / w.measure)
    assert lp_avg_norm(f, w, 2) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("kind", [DECAY, INDICATOR])
def test_grid_vs_pair_sum_on_omega(kind, rng):
    t = make_torus(2, (0.8,), 8.0)
    f1 = sample(t, Annulus(1.0), 4, rng)
    f2 = sample(t, Annulus(0.5), 2, rng)
    w = WeightSpec(SpaceTimeRegion.box((0.0, 16.0), (0.0, 0.0), (64.0, 64.0)), kind)
    assert bilinear_sq(f1, f2, w) == pytest.approx(pair_sum_bilinear_sq(f1, f2, w), rel=1e-9)


def test_single_atom_shortcut_matches_dense(rng):
    t = make_torus(2, (0.8,), 4.0)
    f = sample(t, Ball(1.0), 5, rng)
    w = WeightSpec(SpaceTimeRegion.box((0.0, 3.0), (0.0, 0.0), (5.0, 5.0)))
    pieces = [Wave(f.restrict(np.arange(len(f)) == j)) for j in range(len(f))]
    got = integrate_terms([[pieces, pieces]], w)[0]
    ref = sum(pair_sum_bilinear_sq(p.data, q.data, w) for p in pieces for q in pieces)
    assert got == pytest.approx(ref, rel=1e-10)


def test_orthogonality_single_summand(rng):
    t = make_torus(2, (0.9,), 8.0)
    f = sample(t, Ball(0.2, (0.5, 0.5)), 4, rng)
    w = WeightSpec(SpaceTimeRegion.box((0.0, 8.0), (0.0, 0.0), (8.0, 8.0)))
    rep = check_l2_orthogonality([f], w, side=1.0)
    assert rep.ratio <= 1 + 1e-6


def test_orthogonality_two_separated_atoms():
    t = make_torus(2, (1.0,), 1.0)
    a = SpectralData(t, [[0, 0]], [1.0])
    b = SpectralData(t, [[3, 0]], [1.0])
    w = WeightSpec(SpaceTimeRegion.box((0.0, 5.0), (0.0, 0.0), (10.0, 10.0)))
    rep = check_l2_orthogonality([a, b], w, side=1.0)
    assert rep.hypothesis_ok
    assert abs(rep.ratio - 1) <= 0.2


def test_orthogonality_packets(rng):
    t = make_torus(2, (0.85,), 16.0)
    pieces = []
    for j in range(8):
        c = ((j % 4) * 0.5 + 0.1, (j // 4) * 0.5 + 0.1)
        idx = lattice_indices(t, Ball(0.1, tuple(np.array(c) + 0.1)))[:3]
        pieces.append(random_data(t, idx, rng))
    w = WeightSpec(SpaceTimeRegion.box((0.0, 4.0), (0.0, 0.0), (4.0, 4.0)))
    rep = check_l2_orthogonality(pieces, w, side=0.5)
    assert rep.hypothesis_ok
    assert rep.ratio <= 4


def test_linfty_single_atom():
    t = make_torus(2, (0.9,), 64.0)
    rep = check_linfty_vs_lp(SpectralData(t, [[1, 1]], [1.0]), 16.0)
    assert rep.ratio == pytest.approx(1.0, rel=1e-8)


def test_linfty_two_aligned_atoms():
    t = make_torus(2, (1.0,), 64.0)
    data = SpectralData(t, [[0, 0], [1, 0]], [1.0, 1.0])
    rep = check_linfty_vs_lp(data, 16.0)
    assert rep.hypothesis_ok
    assert rep.ratio <= 2


def test_partition_helpers():
    box = SpaceTimeRegion.box((0.0, 2.0), (0.0, 0.0), (4.0, 4.0))
    tiles = tile_box(box, (1, 2, 2))
    assert len(tiles) == 4 and partition_ok(tiles, box)
    assert not partition_ok(tiles[:3], box)


def test_parallel_one_piece(rng):
    t = make_torus(2, (0.9,), 4.0)
    f1 = sample(t, Annulus(1.0), 3, rng)
    f2 = sample(t, Annulus(0.5), 2, rng)
    box = SpaceTimeRegion.box((0.0, 4.0), (0.0, 0.0), (16.0, 16.0))
    caps = cover_with_caps(2.0, 1 / 4.0, d=2, single_atom=True)

    def ratio_of(w):
        return decoupling_ratio(f1, f2, split_by_pieces(f1, caps), split_by_pieces(f2, caps), w)

    rep = parallel_decoupling_check([box], box, ratio_of)
    assert rep.union_ratio == pytest.approx(rep.piece_ratios[0], rel=1e-14)
    assert rep.holds


def test_parallel_gaps_rejected():
    box = SpaceTimeRegion.box((0.0, 2.0), (0.0, 0.0), (4.0, 4.0))
    with pytest.raises(ValueError):
        parallel_decoupling_check(tile_box(box, (2, 1, 1))[:1], box, lambda w: 1.0)


@pytest.mark.parametrize("lam, N1", [(1.0, 2.0), (2.0, 2.0)])
def test_bridge_norm_identity(lam, N1, rng):
    t = make_torus(2, (0.8,), lam)
    phi1 = sample(t, Annulus(N1), 5, rng)
    phi2 = sample(t, Annulus(N1 / 2), 4, rng)
    lhs, rhs = bridge_norm_identity(phi1, phi2, N1)
    assert lhs == pytest.approx(rhs, rel=1e-8)
