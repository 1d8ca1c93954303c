"""Directed weighted communication graphs and the coupling matrices derived from them.

Convention: ``adjacency[i, j] = a_ij`` is the weight of the edge from node ``j`` to
node ``i``, i.e. agent ``i`` receives information from agent ``j``.  Node indices
are 0-based internally; scenario files use 1-based numbering.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BoundViolation, DimensionMismatch

__all__ = [
    "DirectedGraph",
    "RootSet",
    "CouplingMatrices",
    "build_laplacian",
    "row_stochastic",
    "expanded_coupling",
    "has_spanning_tree",
    "root_set_covers",
    "spectral_radius",
    "ring_graph",
    "line_graph",
    "random_tree_graph",
    "erdos_renyi_graph",
]

_SPECTRAL_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DirectedGraph:
    adjacency: np.ndarray
    dbar_in: np.ndarray = None

    def __post_init__(self):
        adj = np.atleast_2d(np.asarray(self.adjacency, dtype=float))
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise DimensionMismatch(f"adjacency must be square, got {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise ValueError("adjacency contains non-finite weights")
        if np.any(adj < 0):
            raise ValueError("adjacency weights must be nonnegative")
        if np.any(np.diag(adj) != 0):
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        din = adj.sum(axis=1)
        if self.dbar_in is None:
            bound = din.copy()
        else:
            bound = np.asarray(self.dbar_in, dtype=float).reshape(-1)
            if bound.shape != (n,):
                raise DimensionMismatch(f"dbar_in must have length {n}, got {bound.shape}")
        object.__setattr__(self, "adjacency", _frozen(adj))
        object.__setattr__(self, "dbar_in", _frozen(bound))

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @classmethod
    def from_edges(cls, n_agents, edges, dbar_in=None):
        """Build from ``(from, to, weight)`` triples with 0-based node indices."""
        adj = np.zeros((n_agents, n_agents))
        for src, dst, w in edges:
            adj[dst, src] += w
        return cls(adj, dbar_in)

    def successors(self, j):
        return np.flatnonzero(self.adjacency[:, j] > 0)

    def rescaled(self, factor):
        return DirectedGraph(self.adjacency * factor, self.dbar_in * factor)


@dataclass(frozen=True)
class RootSet:
    members: frozenset
    n_agents: int

    def __post_init__(self):
        members = frozenset(int(m) for m in self.members)
        if any(m < 0 or m >= self.n_agents for m in members):
            raise ValueError(f"root indices out of range for {self.n_agents} agents")
        object.__setattr__(self, "members", members)

    @property
    def iota(self) -> np.ndarray:
        v = np.zeros(self.n_agents)
        v[sorted(self.members)] = 1.0
        return v


@dataclass(frozen=True)
class CouplingMatrices:
    laplacian: np.ndarray
    row_stochastic: np.ndarray
    reduced: np.ndarray
    expanded_laplacian: np.ndarray = field(default=None)
    dtilde: np.ndarray = field(default=None)


def build_laplacian(g: DirectedGraph) -> np.ndarray:
    adj = g.adjacency
    L = -adj.copy()
    # diagonal as the negated off-diagonal row sum so that L @ 1 == 0 exactly
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def _check_bounds(g: DirectedGraph):
    din = g.in_degree
    bad = np.flatnonzero(g.dbar_in < din)
    if bad.size:
        i = bad[0]
        raise BoundViolation(
            f"dbar_in[{i}] = {g.dbar_in[i]} is below the weighted in-degree {din[i]}"
        )


def _reduce(D):
    n = D.shape[0]
    if n <= 1:
        return np.zeros((0, 0))
    return D[:-1, :-1] - D[[n - 1], :-1]


def row_stochastic(g: DirectedGraph) -> CouplingMatrices:
    """Row-stochastic coupling ``D = I - (I + D_in)^-1 L`` and its reduction against the last agent.

    The reduced matrix has entries ``d_ij - d_Nj`` for ``i, j < N``: it is the
    action of ``D`` on differences ``x_i - x_N``, so its spectrum is that of
    ``D`` with one eigenvalue ``1`` removed.
    """
    _check_bounds(g)
    L = build_laplacian(g)
    scale = 1.0 / (1.0 + g.dbar_in)
    D = -scale[:, None] * L
    np.fill_diagonal(D, 0.0)
    # diagonal fixed by the row-sum constraint rather than by I - scale*L
    np.fill_diagonal(D, 1.0 - D.sum(axis=1))
    return CouplingMatrices(laplacian=L, row_stochastic=D, reduced=_reduce(D))


def expanded_coupling(g: DirectedGraph, roots: RootSet) -> CouplingMatrices:
    """Expanded Laplacian ``L + diag(iota)`` and ``Dtilde = I - (2I + D_in)^-1 (L + diag(iota))``."""
    if roots.n_agents != g.n_agents:
        raise DimensionMismatch("root set and graph sizes differ")
    base = row_stochastic(g)
    Lt = base.laplacian + np.diag(roots.iota)
    Dt = np.eye(g.n_agents) - Lt / (2.0 + g.dbar_in)[:, None]
    return CouplingMatrices(
        laplacian=base.laplacian,
        row_stochastic=base.row_stochastic,
        reduced=base.reduced,
        expanded_laplacian=Lt,
        dtilde=Dt,
    )


def has_spanning_tree(g: DirectedGraph) -> bool:
    """True iff some node reaches every other node along directed edges.

    Works on the condensation: a spanning tree exists exactly when one strongly
    connected component has no incoming edge from another component.
    """
    n = g.n_agents
    if n <= 1:
        return True
    # csgraph expects edges as graph[src, dst]
    graph = csr_matrix((g.adjacency.T > 0).astype(np.int8))
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    has_incoming = np.zeros(ncomp, dtype=bool)
    dst, src = np.nonzero(g.adjacency > 0)
    for s, d in zip(src, dst):
        if labels[s] != labels[d]:
            has_incoming[labels[d]] = True
    return int(np.count_nonzero(~has_incoming)) == 1


def _reachable_from(g: DirectedGraph, sources) -> np.ndarray:
    seen = np.zeros(g.n_agents, dtype=bool)
    queue = deque(sources)
    seen[list(sources)] = True
    while queue:
        j = queue.popleft()
        for i in g.successors(j):
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return seen


def root_set_covers(g: DirectedGraph, roots: RootSet) -> bool:
    if not roots.members:
        return False
    return bool(_reachable_from(g, sorted(roots.members)).all())


def spectral_radius(M) -> float:
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M, dtype=float)))))


# parametric families used by sweeps and property tests


def ring_graph(n, weight=1.0) -> DirectedGraph:
    """Directed loop 1 -> 2 -> ... -> n -> 1."""
    adj = np.zeros((n, n))
    if n > 1:
        for i in range(1, n):
            adj[i, i - 1] = weight
        adj[0, n - 1] = weight
    return DirectedGraph(adj)


def line_graph(n, weight=1.0) -> DirectedGraph:
    adj = np.zeros((n, n))
    for i in range(1, n):
        adj[i, i - 1] = weight
    return DirectedGraph(adj)


def random_tree_graph(n, seed=0, extra_edges=0, weight_range=(0.5, 2.0)) -> DirectedGraph:
    """Random directed spanning tree rooted at a random node, plus optional extra edges."""
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        adj[order[k], parent] = rng.uniform(*weight_range)
    for _ in range(extra_edges):
        i, j = rng.choice(n, size=2, replace=False) if n > 1 else (0, 0)
        if i != j:
            adj[i, j] = rng.uniform(*weight_range)
    return DirectedGraph(adj)


def erdos_renyi_graph(n, p, seed=0, weight_range=(0.5, 2.0)) -> DirectedGraph:
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    adj = np.where(mask, rng.uniform(*weight_range, size=(n, n)), 0.0)
    return DirectedGraph(adj)
