"""Balanced multipartite graphs and their degree/density functionals."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidInstance


class MultipartiteGraph:
    """A simple undirected graph whose vertex classes are independent sets.

    Vertex ids are the dense integers ``0..N-1``. Adjacency is a read-only
    boolean matrix; a per-vertex, per-class degree table makes every
    ``deg(v, A_j)`` query O(1).
    """

    __slots__ = ("classes", "adj", "class_of", "class_deg", "labels", "_edge_count")

    def __init__(self, classes: Sequence[Sequence[int]], adj: np.ndarray, labels=None,
                 validate: bool = True):
        cls = tuple(tuple(int(v) for v in c) for c in classes)
        adj = np.array(adj, dtype=bool, order="C")   # private copy, frozen below
        n = adj.shape[0]
        if validate:
            if len(cls) < 1:
                raise InvalidInstance("graph needs at least one class")
            if any(len(c) == 0 for c in cls):
                raise InvalidInstance("empty vertex class")
            if adj.shape != (n, n):
                raise InvalidInstance("adjacency matrix must be square")
            ids = sorted(v for c in cls for v in c)
            if ids != list(range(n)):
                raise InvalidInstance("classes must partition the vertex ids 0..N-1")
            if adj.diagonal().any():
                raise InvalidInstance("self-loops are not allowed")
            if not np.array_equal(adj, adj.T):
                raise InvalidInstance("adjacency must be symmetric")
        class_of = np.empty(n, dtype=np.int64)
        for j, c in enumerate(cls):
            class_of[list(c)] = j
        if validate:
            for c in cls:
                idx = np.asarray(c)
                if adj[np.ix_(idx, idx)].any():
                    raise InvalidInstance("edge inside a vertex class")
        adj.setflags(write=False)
        deg = np.zeros((n, len(cls)), dtype=np.int64)
        for j, c in enumerate(cls):
            deg[:, j] = adj[:, list(c)].sum(axis=1)
        deg.setflags(write=False)
        class_of.setflags(write=False)
        self.classes = cls
        self.adj = adj
        self.class_of = class_of
        self.class_deg = deg
        self.labels = labels
        self._edge_count = int(adj.sum()) // 2

    # construction -----------------------------------------------------------
    @classmethod
    def from_edges(cls, classes: Sequence[Sequence[int]], edges: Iterable[Sequence[int]],
                   labels=None) -> "MultipartiteGraph":
        n = sum(len(c) for c in classes)
        adj = np.zeros((n, n), dtype=bool)
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < n and 0 <= v < n):
                raise InvalidInstance(f"edge ({u}, {v}) references an unknown vertex")
            if u == v:
                raise InvalidInstance(f"self-loop at {u}")
            adj[u, v] = adj[v, u] = True
        return cls(classes, adj, labels=labels)

    @classmethod
    def from_class_blocks(cls, sizes: Sequence[int], blocks: dict) -> "MultipartiteGraph":
        """Build from per-pair biadjacency blocks ``{(i, j): array |A_i| x |A_j|}``."""
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        n = int(offsets[-1])
        adj = np.zeros((n, n), dtype=bool)
        for (i, j), blk in blocks.items():
            blk = np.asarray(blk, dtype=bool)
            adj[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] |= blk
            adj[offsets[j]:offsets[j + 1], offsets[i]:offsets[i + 1]] |= blk.T
        classes = [list(range(offsets[i], offsets[i + 1])) for i in range(len(sizes))]
        return cls(classes, adj)

    # basic properties -------------------------------------------------------
    @property
    def q(self) -> int:
        return len(self.classes)

    @property
    def n_vertices(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return self._edge_count

    @property
    def class_sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.classes)

    @property
    def balanced(self) -> bool:
        return len(set(self.class_sizes)) == 1

    def degree(self, v: int, j: int) -> int:
        return int(self.class_deg[v, j])

    def neighbours(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adj[v])

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u, v])

    def edges(self) -> list[tuple[int, int]]:
        us, vs = np.nonzero(np.triu(self.adj))
        return [(int(u), int(v)) for u, v in zip(us, vs)]

    def view(self, i: int, j: int) -> "BipartiteView":
        return BipartiteView(self, i, j)

    # serialisation ----------------------------------------------------------
    def to_json(self) -> dict:
        return {"q": self.q, "classes": [list(c) for c in self.classes],
                "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_json(cls, data: dict) -> "MultipartiteGraph":
        try:
            classes = data["classes"]
            edges = data["edges"]
        except (KeyError, TypeError) as exc:
            raise InvalidInstance(f"instance JSON missing field: {exc}") from None
        g = cls.from_edges(classes, edges)
        if "q" in data and int(data["q"]) != g.q:
            raise InvalidInstance(f"declared q={data['q']} but found {g.q} classes")
        return g

    def __eq__(self, other) -> bool:
        return (isinstance(other, MultipartiteGraph) and self.classes == other.classes
                and np.array_equal(self.adj, other.adj))

    def __hash__(self) -> int:
        return hash((self.classes, self.adj.tobytes()))

    def __repr__(self) -> str:
        return f"MultipartiteGraph(q={self.q}, sizes={self.class_sizes}, edges={self.n_edges})"


@dataclass(frozen=True)
class BipartiteView:
    """The bipartite subgraph between classes ``i`` and ``j`` of a parent graph."""

    graph: MultipartiteGraph
    i: int
    j: int
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.i == self.j or not (0 <= self.i < self.graph.q and 0 <= self.j < self.graph.q):
            raise InvalidArgument(f"invalid class pair ({self.i}, {self.j})")
        a = np.asarray(self.graph.classes[self.i])
        b = np.asarray(self.graph.classes[self.j])
        m = self.graph.adj[np.ix_(a, b)].copy()
        m.setflags(write=False)
        object.__setattr__(self, "_matrix", m)

    @classmethod
    def from_matrix(cls, matrix) -> "BipartiteView":
        m = np.asarray(matrix, dtype=bool)
        g = MultipartiteGraph.from_class_blocks(m.shape, {(0, 1): m})
        return cls(g, 0, 1)

    @property
    def matrix(self) -> np.ndarray:
        """Biadjacency matrix, rows indexed by class ``i`` and columns by class ``j``."""
        return self._matrix

    @property
    def left(self) -> tuple[int, ...]:
        return self.graph.classes[self.i]

    @property
    def right(self) -> tuple[int, ...]:
        return self.graph.classes[self.j]

    @property
    def shape(self) -> tuple[int, int]:
        return self._matrix.shape

    def edges(self) -> list[tuple[int, int]]:
        """Edges as local index pairs ``(row, column)``."""
        r, c = np.nonzero(self._matrix)
        return [(int(a), int(b)) for a, b in zip(r, c)]

    def min_degree(self) -> int:
        m = self._matrix
        if m.size == 0:
            return 0
        return int(min(m.sum(axis=1).min(), m.sum(axis=0).min()))


def proportional_min_degree(g: MultipartiteGraph) -> Fraction:
    """Minimum of ``deg(v, A_j) / |A_j|`` over vertices and foreign classes."""
    if g.q < 2:
        raise InvalidInstance("proportional minimum degree needs at least two classes")
    sizes = np.asarray(g.class_sizes)
    best = None
    for j in range(g.q):
        foreign = g.class_of != j
        dmin = int(g.class_deg[foreign, j].min())
        val = Fraction(dmin, int(sizes[j]))
        if best is None or val < best:
            best = val
    return best


def density(x: Iterable[int], y: Iterable[int], g: MultipartiteGraph) -> Fraction:
    xs, ys = list(x), list(y)
    if not xs or not ys:
        raise InvalidArgument("density needs two nonempty vertex sets")
    if set(xs) & set(ys):
        raise InvalidArgument("density needs disjoint vertex sets")
    if len(set(xs)) != len(xs) or len(set(ys)) != len(ys):
        raise InvalidArgument("vertex sets must not repeat vertices")
    e = int(g.adj[np.ix_(xs, ys)].sum())
    return Fraction(e, len(xs) * len(ys))


def min_proportion_bound(min_degree: int, total_vertices: int, subset_size: int) -> Fraction:
    """Guaranteed proportion of ``S`` hit by a vertex of degree >= ``min_degree``.

    A vertex misses at most ``total - min_degree`` vertices, so inside ``S``
    it sees at least ``min_degree - (total - |S|)`` of them.
    """
    if not (0 < subset_size <= total_vertices):
        raise InvalidArgument("need 0 < subset_size <= total_vertices")
    if not (0 <= min_degree < total_vertices + 1):
        raise InvalidArgument("need 0 <= min_degree <= total_vertices")
    val = Fraction(min_degree - (total_vertices - subset_size), subset_size)
    return max(val, Fraction(0))


def induced_cluster_subgraph(g: MultipartiteGraph, selected: Sequence[Sequence[int]]) -> MultipartiteGraph:
    """Induced subgraph on the selected vertices, class by class.

    ``selected[j]`` lists vertex ids of class ``j``; empty selections drop the
    class. Vertices are relabelled densely and the original ids are kept in
    ``labels``.
    """
    if len(selected) != g.q:
        raise InvalidArgument(f"expected {g.q} selections, got {len(selected)}")
    new_classes, order = [], []
    for j, sel in enumerate(selected):
        sel = [int(v) for v in sel]
        for v in sel:
            if not (0 <= v < g.n_vertices) or g.class_of[v] != j:
                raise InvalidArgument(f"vertex {v} is not in class {j}")
        if len(set(sel)) != len(sel):
            raise InvalidArgument(f"repeated vertex in selection for class {j}")
        if not sel:
            continue
        new_classes.append(list(range(len(order), len(order) + len(sel))))
        order.extend(sel)
    if not order:
        raise InvalidArgument("selection is empty")
    idx = np.asarray(order)
    sub = g.adj[np.ix_(idx, idx)]
    return MultipartiteGraph(new_classes, sub, labels=tuple(order), validate=False)
