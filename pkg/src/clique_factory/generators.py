"""Seeded instance factories.

Cluster graphs are built class pair by class pair from explicit neighbour
sets, and blow-ups replace every cluster by ``m`` vertices and every cluster
edge by a random bipartite graph with a patched minimum degree.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .calibration import get as calib
from .errors import GeneratorError, InvalidArgument
from .factor import ClusterGraph, frac_str
from .graph import MultipartiteGraph, proportional_min_degree
from .rng import derive
from .thresholds import as_fraction, delta_of_q

KINDS = ("complete", "random-threshold", "near-threshold", "blowup")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    q: int
    ell: int
    seed: int = 0
    delta_target: str | None = None
    margin: str | None = None
    m: int | None = None
    d: str | None = None
    eps: float | None = None
    superset_p: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_json(cls, data: dict) -> "GeneratorSpec":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _layout(q: int, n: int) -> list[list[int]]:
    return [list(range(j * n, (j + 1) * n)) for j in range(q)]


def complete_multipartite(q: int, n: int) -> MultipartiteGraph:
    if q < 2 or n < 1:
        raise InvalidArgument("need q >= 2 and n >= 1")
    classes = _layout(q, n)
    cls_of = np.repeat(np.arange(q), n)
    adj = cls_of[:, None] != cls_of[None, :]
    return MultipartiteGraph(classes, adj)


def _threshold_graph(q: int, ell: int, delta: Fraction, seed: int, superset_p: float) -> MultipartiteGraph:
    k = math.ceil(delta * ell)
    rng = derive(seed, "cluster-graph", q, ell)
    n = q * ell
    adj = np.zeros((n, n), dtype=bool)
    chosen = {}
    for i in range(q):
        for j in range(q):
            if i == j:
                continue
            keys = rng.random((ell, ell))
            ranks = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")
            core = ranks < k
            extra = rng.random((ell, ell)) < superset_p
            chosen[i, j] = core | extra
    for i in range(q):
        for j in range(i + 1, q):
            blk = chosen[i, j] | chosen[j, i].T
            adj[i * ell:(i + 1) * ell, j * ell:(j + 1) * ell] = blk
            adj[j * ell:(j + 1) * ell, i * ell:(i + 1) * ell] = blk.T
    return MultipartiteGraph(_layout(q, ell), adj)


def random_cluster_graph(q: int, ell: int, delta_target=None, seed: int = 0,
                         superset_p: float | None = None, allow_below_half: bool = False) -> ClusterGraph:
    """Random balanced cluster graph with proportional minimum degree at least ``delta_target``.

    For every cluster and foreign class: a random ``ceil(delta ell)``-subset,
    enlarged to a uniformly random superset (each further cluster kept with
    probability ``superset_p``); the relation is then symmetrised by union.
    ``delta_target`` defaults to the threshold for ``q``.
    """
    if q < 2 or ell < 1:
        raise InvalidArgument("need q >= 2 and ell >= 1")
    delta = delta_of_q(q) if delta_target is None else as_fraction(delta_target)
    lo = Fraction(0) if allow_below_half else Fraction(1, 2)
    if not lo <= delta <= 1:
        raise InvalidArgument(f"delta_target must lie in [{lo}, 1], got {delta}")
    if superset_p is None:
        superset_p = float(calib("generators", "superset_p"))
    g = _threshold_graph(q, ell, delta, seed, superset_p)
    measured = proportional_min_degree(g)
    if measured < delta:
        raise GeneratorError(f"generated graph has proportional minimum degree {measured} < {delta}")
    spec = GeneratorSpec("random-threshold", q, ell, int(seed), delta_target=frac_str(delta),
                         superset_p=superset_p)
    return ClusterGraph(g, 1, spec)


def near_threshold_instance(q: int, ell: int, margin=0, seed: int = 0,
                            superset_p: float | None = None) -> ClusterGraph:
    """Random cluster graph at ``delta_q - margin``."""
    margin = as_fraction(margin)
    if margin < 0:
        raise InvalidArgument("margin must be nonnegative")
    target = max(delta_of_q(q) - margin, Fraction(0))
    C = random_cluster_graph(q, ell, target, seed, superset_p, allow_below_half=True)
    C.spec = GeneratorSpec("near-threshold", q, ell, int(seed), delta_target=frac_str(target),
                           margin=frac_str(margin), superset_p=C.spec.superset_p)
    return C


def complete_cluster_graph(q: int, ell: int) -> ClusterGraph:
    return ClusterGraph(complete_multipartite(q, ell), 1, GeneratorSpec("complete", q, ell))


@dataclass
class BlowupInstance:
    """Vertex-level graph obtained from a cluster graph.

    Vertex ``U * m + t`` is the ``t``-th vertex of cluster ``U``.
    """

    graph: MultipartiteGraph
    clusters: ClusterGraph
    cluster_of: np.ndarray
    m: int
    d: Fraction
    eps: float
    patched_edges: int
    pair_edges: int
    spec: GeneratorSpec

    @property
    def patch_fraction(self) -> float:
        return self.patched_edges / self.pair_edges if self.pair_edges else 0.0


def _patch_floor(block: np.ndarray, floor: int, rng: np.random.Generator) -> int:
    """Add random edges until every row and column reaches ``floor``.

    A deficient row takes its new edges among deficient columns first, so one
    edge can repair both ends; the remaining column deficits are filled after.
    """
    added = 0
    col_def = floor - block.sum(axis=0)
    for r in np.flatnonzero(block.sum(axis=1) < floor):
        need = floor - int(block[r].sum())
        missing = np.flatnonzero(~block[r])
        rng.shuffle(missing)
        pick = missing[np.argsort(col_def[missing] <= 0, kind="stable")][:need]
        block[r, pick] = True
        col_def[pick] -= 1
        added += need
    for c in np.flatnonzero(col_def > 0):
        need = int(col_def[c])
        missing = np.flatnonzero(~block[:, c])
        block[rng.choice(missing, size=need, replace=False), c] = True
        added += need
    return added


def blowup(C: ClusterGraph, m: int, d, seed: int = 0, eps: float | None = None) -> BlowupInstance:
    """Replace clusters by ``m`` vertices and cluster edges by random pairs of density ``d``.

    Every pair is patched so each vertex has at least ``ceil((1 - f) d m)``
    neighbours in each partner cluster, ``f`` being the configured patch
    fraction. ``eps`` is the regularity parameter declared for downstream
    thresholds.
    """
    if m < 2:
        raise InvalidArgument("m must be at least 2")
    d = as_fraction(d)
    if not 0 < d <= 1:
        raise InvalidArgument("d must lie in (0, 1]")
    if eps is None:
        eps = float(calib("generators", "blowup_eps"))
    frac = float(calib("generators", "blowup_patch_fraction"))
    floor = math.ceil((1 - frac) * float(d) * m - 1e-9)
    g = C.graph
    N = g.n_vertices
    adj = np.zeros((N * m, N * m), dtype=bool)
    patched = 0
    total = 0
    for U, V in g.edges():
        rng = derive(seed, "blowup", U, V)
        block = rng.random((m, m)) < float(d)
        patched += _patch_floor(block, floor, rng)
        total += int(block.sum())
        adj[U * m:(U + 1) * m, V * m:(V + 1) * m] = block
        adj[V * m:(V + 1) * m, U * m:(U + 1) * m] = block.T
    classes = [[U * m + t for U in cls for t in range(m)] for cls in g.classes]
    graph = MultipartiteGraph(classes, adj)
    spec = GeneratorSpec("blowup", g.q, C.ell, int(seed), m=m, d=frac_str(d), eps=eps)
    return BlowupInstance(graph, C, np.repeat(np.arange(N), m), m, d, eps, patched, total, spec)
