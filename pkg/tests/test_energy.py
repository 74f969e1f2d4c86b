import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpparse.core import ImagePlane, ScoreMap
from kpparse.energy import (
    FEATURE_DIM,
    FeatureSet,
    PairwiseWeights,
    UnaryTable,
    estimate_bandwidths,
    extract_features,
    pairwise,
    total_energy,
    unary_score,
    unary_skeleton,
)
from kpparse.skeleton import RegionEvidence
from kpparse.superpixels import AdjacencyGraph, SuperPixelPartition, build_adjacency

from oracles import all_labelings, energies


def feature_set(color, position, texture):
    return FeatureSet(np.array(color, float), np.array(position, float), np.array(texture, float))


def _evidence(part, bg):
    n = len(part)
    return RegionEvidence(np.array(part), np.array(bg, bool), np.zeros((n, 5), np.int64))


def test_pure_red_pixel_color_histogram():
    part = SuperPixelPartition.from_region_map(np.zeros((1, 1), int))
    f = extract_features(ImagePlane(np.array([[[255, 0, 0]]], np.uint8)), part)
    expected = np.zeros(24)
    expected[[7, 8, 16]] = 1.0
    assert f.color[0].tolist() == expected.tolist()
    assert f.matrix().shape == (1, FEATURE_DIM)


def test_whole_image_position_histogram_uniform():
    part = SuperPixelPartition.from_region_map(np.zeros((8, 12), int))
    rng = np.random.default_rng(0)
    f = extract_features(ImagePlane(rng.integers(0, 256, (8, 12, 3), dtype=np.uint8)), part)
    assert np.allclose(f.position[0], 1 / 16)


def test_constant_region_texture_fallback():
    part = SuperPixelPartition.from_region_map(np.zeros((5, 5), int))
    f = extract_features(ImagePlane(np.full((5, 5, 3), 90, np.uint8)), part)
    assert np.allclose(f.texture[0], 1 / 8)


def test_histograms_are_l1_normalized():
    rng = np.random.default_rng(1)
    region_map = rng.integers(0, 4, (10, 10))
    part = SuperPixelPartition.from_region_map(region_map)
    f = extract_features(ImagePlane(rng.integers(0, 256, (10, 10, 3), dtype=np.uint8)), part)
    assert np.allclose(f.color.reshape(-1, 3, 8).sum(axis=2), 1.0)
    for g in (f.position, f.texture):
        assert np.allclose(g.sum(axis=1), 1.0)
    assert f.matrix().min() >= 0


def test_unary_skeleton_cases():
    t = unary_skeleton(_evidence([0, 1, 0], [False, False, True]), 5)
    assert np.allclose(t.costs[0], np.log(5))
    assert t.costs[1].tolist() == [1e7, 0, 1e7, 1e7, 1e7]
    assert t.costs[2].tolist() == [0, 1e7, 1e7, 1e7, 1e7]
    assert t.hard.tolist() == [False, True, True]


def test_unary_skeleton_rejects_contradictory_evidence():
    with pytest.raises(ValueError):
        unary_skeleton(_evidence([2], [True]), 5)


def test_unary_score_cases():
    part = SuperPixelPartition.from_region_map(np.array([[0, 0, 1]]))
    v = np.zeros((5, 1, 3))
    v[1, 0, :2] = 1.0
    v[:, 0, 2] = 0.2
    t = unary_score(ScoreMap(v), part, mu=1.0, epsilon=0.0)
    assert t.costs[0, 1] == 0.0
    assert np.isinf(t.costs[0, 0])
    assert np.allclose(t.costs[1], np.log(5))
    assert not unary_score(ScoreMap(v), part, mu=0.0).costs.any()
    with pytest.raises(ValueError):
        unary_score(ScoreMap(v), part, mu=-1.0)


def test_unary_tables_add():
    a = UnaryTable(np.ones((2, 3)), np.array([True, False]))
    b = UnaryTable(np.full((2, 3), 2.0), np.array([False, False]))
    s = a + b
    assert np.all(s.costs == 3.0)
    assert s.hard.tolist() == [True, False]


def test_pairwise_cases():
    g = AdjacencyGraph(2, np.array([[0, 1]]))
    same = feature_set([[0.5, 0.5]] * 2, [[1.0]] * 2, [[1.0]] * 2)
    assert pairwise(g, same).weights[0] == pytest.approx(3.0)
    f = feature_set([[1.0, 0.0], [0.0, 1.0]], [[1.0]] * 2, [[1.0]] * 2)
    assert pairwise(g, f).weights[0] == pytest.approx(np.exp(-1) + 2, rel=1e-12)
    assert pairwise(g, f, omegas=(0, 0, 0)).weights[0] == 0.0
    with pytest.raises(ValueError):
        pairwise(g, f, sigmas=(0, 1, 1))


def test_estimate_bandwidths_cases():
    g1 = AdjacencyGraph(2, np.array([[0, 1]]))
    same = feature_set([[1.0, 0.0]] * 2, [[1.0]] * 2, [[1.0]] * 2)
    assert estimate_bandwidths(g1, same) == (1.0, 1.0, 1.0)
    one = feature_set([[0.4, 0.0], [0.0, 0.0]], [[1.0]] * 2, [[1.0]] * 2)
    assert estimate_bandwidths(g1, one)[0] == pytest.approx(0.4)
    g3 = AdjacencyGraph(4, np.array([[0, 1], [0, 2], [0, 3]]))
    three = feature_set([[0.0], [0.1], [0.2], [0.3]], [[1.0]] * 4, [[1.0]] * 4)
    assert estimate_bandwidths(g3, three)[0] == pytest.approx(0.2)


def test_total_energy_cases():
    hard = unary_skeleton(_evidence([1, 2, 0], [False, False, True]), 5)
    w = PairwiseWeights(np.array([[0, 1], [1, 2]]), np.array([1.0, 1.0]), 0.0)
    assert total_energy([1, 2, 0], hard, w) == 0.0
    two = PairwiseWeights(np.array([[0, 1]]), np.array([2.0]), 1.0)
    assert total_energy([0, 1], UnaryTable(np.zeros((2, 2)), np.zeros(2, bool)), two) == 2.0
    with pytest.raises(ValueError):
        total_energy([0], UnaryTable(np.zeros((2, 2)), np.zeros(2, bool)), two)


def test_real_image_weights_positive_and_bounded():
    rng = np.random.default_rng(5)
    part = SuperPixelPartition.from_region_map(np.repeat(np.arange(6), 6).reshape(6, 6))
    f = extract_features(ImagePlane(rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)), part)
    g = build_adjacency(part)
    w = pairwise(g, f, sigmas=estimate_bandwidths(g, f)).weights
    assert np.all(w > 0) and np.all(w <= 3.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_total_energy_matches_vectorized_oracle(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 6)), int(rng.integers(2, 4))
    edges = np.array([(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]).reshape(-1, 2)
    w = PairwiseWeights(edges, rng.uniform(0, 2, len(edges)), float(rng.uniform(0, 3)))
    u = UnaryTable(rng.uniform(0, 5, (n, k)), np.zeros(n, bool))
    labs = all_labelings(n, k)
    expected = energies(labs, u.costs, edges, w.scaled())
    for lab, e in zip(labs, expected):
        assert total_energy(lab, u, w) == pytest.approx(e, rel=1e-12, abs=1e-12)
