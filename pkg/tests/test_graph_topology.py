import numpy as np
import pytest

from conftest import CASE1_EDGES
from syncnet.errors import BoundViolation
from syncnet.graph_topology import (
    DirectedGraph,
    RootSet,
    build_laplacian,
    expanded_coupling,
    has_spanning_tree,
    random_tree_graph,
    ring_graph,
    root_set_covers,
    row_stochastic,
    spectral_radius,
)


def case1():
    adj = np.zeros((6, 6))
    for src, dst in CASE1_EDGES:
        adj[dst - 1, src - 1] = 1.0
    return DirectedGraph(adj)


def brute_laplacian(adj):
    n = adj.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                L[i, j] = sum(adj[i, k] for k in range(n) if k != i)
            else:
                L[i, j] = -adj[i, j]
    return L


def test_single_node_laplacian():
    assert np.array_equal(build_laplacian(DirectedGraph(np.zeros((1, 1)))), np.zeros((1, 1)))


def test_two_node_laplacian():
    g = DirectedGraph(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert np.array_equal(build_laplacian(g), [[1, -1], [0, 0]])


def test_case1_laplacian_row3_matches_brute_force():
    g = case1()
    L = build_laplacian(g)
    assert np.array_equal(L[2], [0, -1, 2, 0, 0, -1])
    assert np.array_equal(L, brute_laplacian(g.adjacency))


def test_case1_row_stochastic_entries():
    D = row_stochastic(case1()).row_stochastic
    assert D[0, 0] == pytest.approx(0.5) and D[0, 2] == pytest.approx(0.5)
    for j in (2, 1, 5):
        assert D[2, j] == pytest.approx(1 / 3)


def test_row_stochastic_identity_and_row_sums(rng):
    for seed in range(20):
        g = random_tree_graph(int(rng.integers(2, 12)), seed=seed, extra_edges=3)
        cm = row_stochastic(g)
        n = g.n_agents
        assert np.allclose(cm.row_stochastic.sum(axis=1), 1.0, atol=1e-15)
        assert np.all(cm.row_stochastic >= 0) and np.all(cm.row_stochastic <= 1)
        lhs = np.linalg.solve(np.eye(n) + np.diag(g.dbar_in), cm.laplacian)
        assert np.max(np.abs(lhs - (np.eye(n) - cm.row_stochastic))) < 1e-12
        assert np.max(np.abs(cm.laplacian @ np.ones(n))) <= 1e-14 * max(1.0, np.abs(cm.laplacian).max())


def test_ring_rows_are_half_half():
    g = ring_graph(60)
    assert g.adjacency[1, 0] == 1 and g.adjacency[0, 59] == 1
    D = row_stochastic(g).row_stochastic
    assert np.allclose(np.diag(D), 0.5)
    off = D - np.diag(np.diag(D))
    assert np.allclose(np.sort(off, axis=1)[:, -1], 0.5) and np.count_nonzero(off) == 60


def test_reduced_spectrum_drops_one_unit_eigenvalue():
    g = random_tree_graph(7, seed=3, extra_edges=4)
    cm = row_stochastic(g)
    ev = np.linalg.eigvals(cm.row_stochastic)
    k = np.argmin(np.abs(ev - 1.0))
    rest = np.sort_complex(np.delete(ev, k))
    red = np.sort_complex(np.linalg.eigvals(cm.reduced))
    assert np.allclose(rest, red, atol=1e-10)
    assert spectral_radius(cm.reduced) < 1


def test_single_node_reduced_is_empty():
    cm = row_stochastic(DirectedGraph(np.zeros((1, 1))))
    assert np.array_equal(cm.row_stochastic, [[1.0]]) and cm.reduced.shape == (0, 0)


def test_bound_violation():
    with pytest.raises(BoundViolation):
        row_stochastic(DirectedGraph(np.array([[0.0, 2.0], [0.0, 0.0]]), dbar_in=np.array([1.0, 0.0])))


def test_spanning_tree_cases():
    assert has_spanning_tree(DirectedGraph(np.zeros((1, 1))))
    assert not has_spanning_tree(DirectedGraph(np.zeros((2, 2))))
    assert has_spanning_tree(ring_graph(60))
    g = random_tree_graph(9, seed=1)
    assert has_spanning_tree(g) == has_spanning_tree(g.rescaled(3.7))


def test_expanded_coupling_cases():
    cm = expanded_coupling(DirectedGraph(np.zeros((1, 1))), RootSet([0], 1))
    assert np.array_equal(cm.expanded_laplacian, [[1.0]]) and np.allclose(cm.dtilde, [[0.5]])
    g = case1()
    cm = expanded_coupling(g, RootSet([0], 6))
    diff = cm.expanded_laplacian - cm.laplacian
    assert diff[0, 0] == 1 and np.count_nonzero(diff) == 1 and cm.expanded_laplacian[0, 0] == 2
    assert spectral_radius(expanded_coupling(ring_graph(60), RootSet([0], 60)).dtilde) < 1


def reach_bfs(adj, sources):
    n = adj.shape[0]
    seen, frontier = set(sources), list(sources)
    while frontier:
        j = frontier.pop()
        for i in range(n):
            if adj[i, j] > 0 and i not in seen:
                seen.add(i)
                frontier.append(i)
    return seen


def test_root_set_cover_cases():
    g = case1()
    assert root_set_covers(g, RootSet([0], 6))
    assert reach_bfs(g.adjacency, [0]) == set(range(6))
    assert root_set_covers(g, RootSet(range(6), 6))
    assert not root_set_covers(DirectedGraph(np.zeros((2, 2))), RootSet([0], 2))
