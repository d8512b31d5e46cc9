import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingscan.graphs import (
    AdjacencyMatrix,
    CouplingMatrix,
    GraphError,
    GraphSpec,
    build_complete,
    build_erdos_renyi,
    build_graph,
    build_lattice,
    build_random_regular,
    build_regular_circulant,
    coupling_from_graph,
    format_edge_list,
    graph_stats,
    parse_edge_list,
)


def _assert_simple_symmetric(adj: AdjacencyMatrix):
    a = adj.to_dense()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_complete_small():
    adj = build_complete(3)
    assert adj.edge_set() == {(0, 1), (0, 2), (1, 2)}
    assert adj.degrees.tolist() == [2, 2, 2]
    assert build_complete(1).num_edges == 0


def test_complete_mean_field_norm():
    c = coupling_from_graph(build_complete(4))
    assert graph_stats(c).inf_norm == pytest.approx(1.0)


def test_circulant_cycle_and_complete():
    cyc = build_regular_circulant(6, 2)
    assert cyc.edge_set() == {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)}
    assert build_regular_circulant(6, 5).edge_set() == build_complete(6).edge_set()


@pytest.mark.parametrize("builder", [build_regular_circulant, lambda n, d: build_random_regular(n, d, 0)])
def test_regular_parity_error(builder):
    with pytest.raises(GraphError):
        builder(5, 3)


@pytest.mark.parametrize("n,d", [(6, 3), (10, 3), (20, 4), (30, 7), (8, 7)])
def test_random_regular_degrees(n, d):
    adj = build_random_regular(n, d, seed=1)
    _assert_simple_symmetric(adj)
    assert np.all(adj.degrees == d)


def test_random_regular_deterministic():
    assert build_random_regular(10, 3, 5).edge_set() == build_random_regular(10, 3, 5).edge_set()


def test_erdos_renyi_extremes():
    assert build_erdos_renyi(12, 0.0, 3).num_edges == 0
    assert build_erdos_renyi(12, 1.0, 3).edge_set() == build_complete(12).edge_set()


def test_erdos_renyi_edge_count():
    n, p = 200, 0.5
    m1 = build_erdos_renyi(n, p, 11).num_edges
    m2 = build_erdos_renyi(n, p, 11).num_edges
    assert m1 == m2
    N = n * (n - 1) // 2
    assert abs(m1 - N * p) <= 4 * np.sqrt(N * p * (1 - p))


def test_lattice_path():
    adj = build_lattice(1, 5, 1)
    assert adj.edge_set() == {(0, 1), (1, 2), (2, 3), (3, 4)}


def _interior_degree_by_enumeration(dim, L):
    pts = itertools.product(range(-L, L + 1), repeat=dim)
    return sum(1 for p in pts if 0 < sum(abs(v) for v in p) <= L)


@pytest.mark.parametrize("dim,side,L,center", [(2, 3, 1, 4), (2, 7, 2, 24), (3, 5, 1, 62), (1, 9, 3, 4)])
def test_lattice_interior_degree(dim, side, L, center):
    adj = build_lattice(dim, side, L)
    _assert_simple_symmetric(adj)
    assert adj.degrees[center] == _interior_degree_by_enumeration(dim, L)


def test_lattice_interior_degree_values():
    assert build_lattice(2, 3, 1).degrees[4] == 4
    assert build_lattice(2, 7, 2).degrees[24] == 12


def test_mean_field_coupling_k4_spectrum():
    c = coupling_from_graph(build_complete(4))
    np.testing.assert_allclose(c.to_dense(), (np.ones((4, 4)) - np.eye(4)) / 3)
    st_ = graph_stats(c)
    assert st_.lambda1 == pytest.approx(1.0)
    assert st_.lambda2 == pytest.approx(-1 / 3)
    assert st_.lambda_min == pytest.approx(-1 / 3)
    assert st_.degree_irregularity == pytest.approx(0.0)


def test_lattice_scaling_path3():
    c = coupling_from_graph(build_lattice(1, 3, 1), "lattice")
    q = c.to_dense()
    assert q[0, 1] == q[1, 2] == 1 and q[0, 2] == 0
    assert graph_stats(c).inf_norm == 2


def test_lattice_norm_vs_formula():
    s = graph_stats(coupling_from_graph(build_lattice(2, 7, 2), "lattice"))
    assert s.inf_norm == 12
    assert s.lattice_formula_norm == 8


def test_empty_graph_mean_field_error():
    with pytest.raises(GraphError):
        coupling_from_graph(build_erdos_renyi(5, 0.0, 0))


def test_coupling_validation():
    with pytest.raises(ValueError):
        CouplingMatrix.from_dense(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(ValueError):
        CouplingMatrix.from_dense(np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.parametrize("n,d", [(6, 2), (9, 4), (12, 5), (20, 3)])
def test_mean_field_regular_row_sums(n, d):
    for adj in (build_regular_circulant(n, d), build_random_regular(n, d, 2)):
        c = coupling_from_graph(adj)
        np.testing.assert_allclose(c.row_sums(), 1.0, atol=1e-14)
        assert c.inf_norm == pytest.approx(1.0)


@pytest.mark.parametrize("spec", [
    GraphSpec("erdos_renyi", 300, p=0.2, seed=4),
    GraphSpec("random_regular", 400, d=6, seed=4),
    GraphSpec("lattice", 256, dim=2, side=16),
])
def test_iterative_eigen_matches_dense(spec):
    scaling = "lattice" if spec.family.value == "lattice" else "mean_field"
    c = coupling_from_graph(build_graph(spec), scaling)
    dense, it = graph_stats(c, "dense"), graph_stats(c, "iterative")
    assert abs(dense.lambda2 - it.lambda2) < 1e-4
    assert abs(dense.lambda1 - it.lambda1) < 1e-4
    assert abs(dense.lambda_min - it.lambda_min) < 1e-4


def test_alpha_n():
    s = graph_stats(coupling_from_graph(build_complete(10)))
    assert s.alpha_n == pytest.approx(np.sqrt(np.log(10) / 9))


@given(n=st.integers(2, 40), p=st.floats(0.05, 1.0), seed=st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_erdos_renyi_properties(n, p, seed):
    adj = build_erdos_renyi(n, p, seed)
    _assert_simple_symmetric(adj)
    assert adj.edge_set() == build_erdos_renyi(n, p, seed).edge_set()
    assert adj.degrees.sum() == 2 * adj.num_edges


@given(n=st.integers(3, 40), d=st.integers(1, 12))
@settings(max_examples=40, deadline=None)
def test_circulant_properties(n, d):
    if d >= n or (n * d) % 2:
        with pytest.raises(GraphError):
            build_regular_circulant(n, d)
        return
    adj = build_regular_circulant(n, d)
    _assert_simple_symmetric(adj)
    assert np.all(adj.degrees == d)


def test_edge_list_roundtrip(tmp_path):
    adj = build_random_regular(12, 3, 9)
    text = format_edge_list(adj)
    assert text.splitlines()[0] == f"12 {adj.num_edges}"
    assert parse_edge_list(text).edge_set() == adj.edge_set()


def test_self_loop_and_duplicate_rejected():
    with pytest.raises(GraphError):
        AdjacencyMatrix(3, [(0, 0)])
    with pytest.raises(GraphError):
        AdjacencyMatrix(3, [(0, 1), (1, 0)])
