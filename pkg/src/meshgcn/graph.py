"""Graph data model for mesh samples.

A :class:`Graph` stores node features, optional node positions and a compact
``(E, 2)`` directed edge list. Every undirected edge is stored once in each
direction and rows are sorted lexicographically, so two graphs with the same
structure compare bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Graph:
    """Immutable undirected graph with per-node features.

    Use :func:`build_graph` to construct one from raw inputs.
    """

    def __init__(self, features: np.ndarray, edges: np.ndarray, positions: np.ndarray | None = None):
        # trusted constructor: inputs must already be canonical
        self.features = _readonly(features)
        self.edges = _readonly(edges)
        self.positions = None if positions is None else _readonly(positions)
        self.num_nodes = features.shape[0]

    @property
    def num_edges(self) -> int:
        """Directed entries in the edge list (twice the undirected edge count)."""
        return self.edges.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, num_features={self.num_features})"

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.positions is None) != (other.positions is None):
            return False
        same = (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.edges, other.edges)
        )
        if same and self.positions is not None:
            same = np.array_equal(self.positions, other.positions)
        return same

    __hash__ = None

    @cached_property
    def degrees(self) -> np.ndarray:
        return _readonly(np.bincount(self.edges[:, 0], minlength=self.num_nodes))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        data = np.ones(self.num_edges)
        return sp.csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))

    @cached_property
    def mean_operator(self) -> sp.csr_matrix:
        """Row-stochastic operator averaging each node with its neighbours."""
        a = self.adjacency + sp.identity(self.num_nodes, format="csr")
        inv = 1.0 / (self.degrees + 1.0)
        return sp.csr_matrix(sp.diags(inv) @ a)

    @cached_property
    def mean_operator_t(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.mean_operator.T)

    @cached_property
    def _neighbor_lists(self) -> list[np.ndarray]:
        starts = np.concatenate([[0], np.cumsum(self.degrees)])
        dst = self.edges[:, 1]
        return [dst[starts[i]:starts[i + 1]] for i in range(self.num_nodes)]

    def neighbors(self, v: int) -> np.ndarray:
        self._check_node(v)
        return self._neighbor_lists[v]

    def _check_node(self, v):
        if not (0 <= v < self.num_nodes):
            raise GraphError(f"node index {v} out of range [0, {self.num_nodes})")

    def degree(self, v: int) -> int:
        self._check_node(v)
        return int(self.degrees[v])

    def k_hop_neighbors(self, v: int, k: int) -> set[int]:
        """Nodes within ``k`` hops of ``v``, including ``v``."""
        self._check_node(v)
        if k < 0:
            raise GraphError("k must be non-negative")
        seen = {int(v)}
        frontier = [int(v)]
        for _ in range(k):
            nxt = []
            for u in frontier:
                for w in self._neighbor_lists[u]:
                    w = int(w)
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            if not nxt:
                break
            frontier = nxt
        return seen

    def permute(self, p: Permutation) -> Graph:
        """Relabel nodes: old node j becomes new node ``p.mapping[j]``."""
        m = p.mapping
        if m.shape[0] != self.num_nodes:
            raise GraphError(f"permutation of size {m.shape[0]} for graph with {self.num_nodes} nodes")
        inv = p.inverse().mapping
        feats = self.features[inv].copy()
        pos = None if self.positions is None else self.positions[inv].copy()
        return Graph(feats, _canonical_order(m[self.edges]), pos)

    def induced_subgraph(self, keep) -> tuple[Graph, dict[int, int]]:
        """Subgraph on ``keep`` (reindexed in keep order) and the old-to-new index map."""
        keep = np.asarray(keep, dtype=np.int64).ravel()
        if keep.size and (keep.min() < 0 or keep.max() >= self.num_nodes):
            bad = keep[(keep < 0) | (keep >= self.num_nodes)][0]
            raise GraphError(f"keep index {bad} out of range [0, {self.num_nodes})")
        if np.unique(keep).size != keep.size:
            raise GraphError("keep indices must be distinct")
        sub, new_index = self._subgraph_fast(keep)
        return sub, {int(k): i for i, k in enumerate(keep)}

    def _subgraph_fast(self, keep: np.ndarray) -> tuple[Graph, np.ndarray]:
        new_index = np.full(self.num_nodes, -1, dtype=np.int64)
        new_index[keep] = np.arange(keep.size)
        e = new_index[self.edges]
        e = e[(e[:, 0] >= 0) & (e[:, 1] >= 0)]
        pos = None if self.positions is None else self.positions[keep].copy()
        return Graph(self.features[keep].copy(), _canonical_order(e), pos), new_index


@dataclass(frozen=True)
class Permutation:
    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise GraphError("mapping is not a bijection on [0, n)")
        object.__setattr__(self, "mapping", _readonly(m))

    def inverse(self) -> Permutation:
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.mapping.size)
        return Permutation(inv)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> Permutation:
        return cls(rng.permutation(n))


def _canonical_order(e: np.ndarray) -> np.ndarray:
    """Sort directed pairs lexicographically (pairs must be distinct)."""
    e = np.asarray(e, dtype=np.int64).reshape(-1, 2)
    if e.shape[0] == 0:
        return np.empty((0, 2), dtype=np.int64)
    base = int(e.max()) + 1
    key = np.sort(e[:, 0] * base + e[:, 1])
    return np.column_stack([key // base, key % base])


def build_graph(features, edges, positions=None) -> Graph:
    """Validate and canonicalize raw inputs into a :class:`Graph`.

    ``edges`` may list each undirected edge in one or both directions; the
    symmetric closure is stored. A directed pair given twice, a self-loop, an
    out-of-range index or a non-finite feature is rejected.
    """
    x = np.array(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise GraphError("features must be a non-empty (n, F) array")
    bad = ~np.isfinite(x)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise GraphError(f"non-finite feature at node {row}, column {col}")
    n = x.shape[0]

    e = np.asarray(edges if edges is not None else np.empty((0, 2)), dtype=np.int64)
    if e.size == 0:
        e = np.empty((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise GraphError("edges must be (E, 2) index pairs")
    out = (e < 0) | (e >= n)
    if out.any():
        i, j = np.argwhere(out)[0]
        raise GraphError(f"edge {i} references node {e[i, j]}, out of range [0, {n})")
    loops = np.flatnonzero(e[:, 0] == e[:, 1])
    if loops.size:
        raise GraphError(f"edge {loops[0]} is a self-loop on node {e[loops[0], 0]}")
    uniq, first, counts = np.unique(e, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[counts > 1][0]
        raise GraphError(f"duplicate edge ({dup[0]}, {dup[1]})")
    both = np.unique(np.concatenate([e, e[:, ::-1]]), axis=0)

    pos = None
    if positions is not None:
        pos = np.array(positions, dtype=np.float64)
        if pos.shape != (n, 2):
            raise GraphError(f"positions must have shape ({n}, 2), got {pos.shape}")
    return Graph(x, _canonical_order(both), pos)

