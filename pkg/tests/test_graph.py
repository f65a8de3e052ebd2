import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxgt.errors import BadShape, NotConnected, NotDoublyStochastic, SparsityMismatch
from proxgt.graph import (
    Graph, build_topology, is_connected, load_weight_csv, metropolis_weights, parse_topology,
    second_singular_value, spectral_gap, validate_weight_matrix,
)


def test_ring4_edges():
    assert build_topology("ring", 4).edges == {(0, 1), (1, 2), (2, 3), (0, 3)}


def test_complete3_edges():
    assert build_topology("complete", 3).edges == {(0, 1), (0, 2), (1, 2)}


def test_grid9_edge_count():
    # enumerate right and down neighbours on a 3x3 lattice
    expected = sum(1 for r in range(3) for c in range(3) for dr, dc in ((0, 1), (1, 0))
                   if r + dr < 3 and c + dc < 3)
    g = build_topology("grid2d", 9)
    assert len(g.edges) == expected == 12


def test_grid_needs_square():
    with pytest.raises(BadShape):
        build_topology("grid2d", 8)


def test_bad_n():
    with pytest.raises(BadShape):
        build_topology("ring", 0)


def test_erdos_renyi_connected_and_seeded():
    a = build_topology("erdos_renyi", 12, prob=0.3, seed=5)
    b = parse_topology("er:0.3:5", 12)
    assert is_connected(a) and a.edges == b.edges


def test_erdos_renyi_gives_up():
    with pytest.raises(NotConnected):
        build_topology("erdos_renyi", 10, prob=0.0, seed=1)


def test_metropolis_ring4():
    w = np.asarray(metropolis_weights(build_topology("ring", 4)))
    expected = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]]) / 3
    np.testing.assert_allclose(w, expected, atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_metropolis_complete(n):
    w = metropolis_weights(build_topology("complete", n))
    np.testing.assert_allclose(np.asarray(w), np.full((n, n), 1 / n), atol=1e-15)
    assert w.lambda_star < 1e-12
    assert spectral_gap(w) == pytest.approx(1.0)


def test_metropolis_star5():
    w = np.asarray(metropolis_weights(build_topology("star", 5)))
    hub = 0
    for leaf in range(1, 5):
        assert w[hub, leaf] == pytest.approx(1 / 5)
        assert w[leaf, leaf] == pytest.approx(4 / 5)
    assert w[hub, hub] == pytest.approx(1 / 5)


def test_ring4_lambda_matches_circulant_eigenvalues():
    # eigenvalues of the circulant with first row (1/3, 1/3, 0, 1/3)
    eig = [(1 + 2 * math.cos(2 * math.pi * k / 4)) / 3 for k in range(4)]
    expected = max(abs(e) for e in eig[1:])
    w = metropolis_weights(build_topology("ring", 4))
    assert w.lambda_star == pytest.approx(expected, abs=1e-10)
    assert w.lambda_star == pytest.approx(1 / 3, abs=1e-10)
    assert spectral_gap(w) == pytest.approx(2 / 3, abs=1e-10)


def test_single_node():
    w = metropolis_weights(build_topology("ring", 1))
    assert np.asarray(w).tolist() == [[1.0]]
    assert spectral_gap(w) == 1.0


def test_lazy_variant():
    g = build_topology("ring", 6)
    w, lazy = metropolis_weights(g), metropolis_weights(g, lazy=True)
    np.testing.assert_allclose(np.asarray(lazy), (np.eye(6) + np.asarray(w)) / 2)
    assert lazy.lambda_star < 1


@pytest.mark.parametrize("kind,n", [("ring", 8), ("path", 5), ("star", 6), ("grid2d", 16), ("complete", 5)])
def test_weight_invariants(kind, n):
    g = build_topology(kind, n)
    w = np.asarray(metropolis_weights(g))
    assert np.max(np.abs(w.sum(axis=0) - 1)) <= 1e-12
    assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12
    support = g.adjacency() + np.eye(n)
    assert np.array_equal(w > 0, support > 0)


@pytest.mark.parametrize("kind,n", [("ring", 8), ("path", 6), ("grid2d", 9)])
def test_contraction_and_powers(kind, n):
    wm = metropolis_weights(build_topology(kind, n))
    w, lam = np.asarray(wm), wm.lambda_star
    J = np.full((n, n), 1 / n)
    gen = np.random.default_rng(0)
    for K in (1, 2, 5):
        WK = np.linalg.matrix_power(w, K)
        for _ in range(100):
            x = gen.standard_normal(n)
            assert np.linalg.norm(WK @ x - J @ x) <= lam**K * np.linalg.norm(x - J @ x) + 1e-10
    for K in (1, 2, 3):
        assert np.linalg.norm(np.linalg.matrix_power(w, K) - J, 2) == pytest.approx(lam**K, abs=1e-8)


def test_mean_preservation():
    w = np.asarray(metropolis_weights(build_topology("path", 7)))
    x = np.random.default_rng(1).standard_normal(7)
    assert abs((w @ x).mean() - x.mean()) <= 1e-12


def test_validate_identity_on_disconnected_support():
    g = build_topology("ring", 4)
    with pytest.raises(SparsityMismatch):
        validate_weight_matrix(np.eye(4), g)
    empty = Graph(1, frozenset(), "custom")
    assert validate_weight_matrix(np.eye(1), empty).lambda_star == 0.0


def test_validate_accepts_average_on_complete():
    n = 5
    w = validate_weight_matrix(np.full((n, n), 1 / n), build_topology("complete", n))
    assert w.lambda_star < 1e-12


def test_validate_rejects_bad_row_sum():
    m = np.full((3, 3), 1 / 3)
    m[0, 0] += 0.01
    with pytest.raises(NotDoublyStochastic):
        validate_weight_matrix(m, build_topology("complete", 3))


def test_weight_csv_roundtrip(tmp_path):
    m = np.asarray(metropolis_weights(build_topology("ring", 5)))
    path = tmp_path / "w.csv"
    path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in m))
    np.testing.assert_array_equal(load_weight_csv(path), m)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 20), prob=st.floats(0.2, 0.9), seed=st.integers(0, 1000))
def test_er_weights_property(n, prob, seed):
    try:
        g = build_topology("erdos_renyi", n, prob=prob, seed=seed)
    except NotConnected:
        return
    w = metropolis_weights(g)
    a = np.asarray(w)
    assert np.allclose(a, a.T)
    assert np.max(np.abs(a.sum(axis=1) - 1)) <= 1e-12
    assert 0 <= w.lambda_star < 1
    assert w.lambda_star == pytest.approx(second_singular_value(a))
