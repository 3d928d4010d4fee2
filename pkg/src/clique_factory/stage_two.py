"""From a cluster-level clique factor to a vertex-level K_q-factor.

The cluster graph is blown up into a vertex graph, every cluster is cut into
one piece per clique that contains it, and then:

1. trim: vertices with too few neighbours in a partner cluster of their own
   clique go to the exceptional set ``W0``;
2. redistribute: every ``W0`` vertex joins a cluster of its own class whose
   clique it is adjacent to, with a per-cluster cap;
3. rebalance: vertices move along the ``L_i`` digraphs until every clique has
   equal cluster sizes;
4. embed: each clique is covered by vertex-disjoint K_q's through iterated
   matching contraction.

Every stage either succeeds or raises a certified failure.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx
import numpy as np

from . import kernels
from .calibration import get as calib
from .errors import (CertifiedFailure, EmbeddingFailure, InstanceNotRegularEnough,
                     InvariantViolation, RebalanceFailure, RedistributionFailure)
from .factor import ClusterGraph, CliqueFactor, find_factor, frac_str, verify_factor
from .generators import BlowupInstance, blowup, random_cluster_graph
from .graph import MultipartiteGraph
from .regularity import BipartitePair, irregularity_witness_search
from .rng import derive, derive_u64
from .thresholds import as_fraction

W0 = -1
_TOL = 1e-9


@dataclass
class MoveEvent:
    phase: str
    vertex: int
    source: int          # clique index, or -1 for W0
    dest: int            # clique index, or -1 for W0
    degrees: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {"phase": self.phase, "vertex": self.vertex, "source": self.source,
                "dest": self.dest, "degrees": list(self.degrees)}


class BlownInstance:
    """Vertex graph whose vertices sit in the clusters of a clique factor.

    ``slot[v]`` is the clique holding ``v`` (its cluster within the clique
    is the one of ``v``'s class) or ``W0``. Split cluster ``k * q + j`` is
    the class-``j`` cluster of clique ``k``.
    """

    def __init__(self, graph: MultipartiteGraph, clusters: ClusterGraph, parent: np.ndarray,
                 factor: CliqueFactor, slot: np.ndarray, d, eps: float, w0_bound: int | None = None):
        self.graph = graph
        self.clusters = clusters
        self.parent = np.asarray(parent, dtype=np.int64)
        self.factor = factor
        self.slot = np.asarray(slot, dtype=np.int64).copy()
        self.d = as_fraction(d)
        self.eps = float(eps)
        self.q = factor.q
        self.K = factor.n_cliques
        self.w0_bound = graph.n_vertices if w0_bound is None else int(w0_bound)
        self.log: list[MoveEvent] = []
        self.w0_history: dict[str, int] = {}
        self._check_slots()

    def _check_slots(self) -> None:
        if len(self.slot) != self.graph.n_vertices:
            raise InvariantViolation("slot map does not cover the vertex set")
        if ((self.slot < W0) | (self.slot >= self.K)).any():
            raise InvariantViolation("vertex assigned to an unknown clique")

    def copy(self) -> "BlownInstance":
        out = BlownInstance(self.graph, self.clusters, self.parent, self.factor, self.slot,
                            self.d, self.eps, self.w0_bound)
        out.log = list(self.log)
        out.w0_history = dict(self.w0_history)
        return out

    @property
    def n(self) -> int:
        """Vertices per class."""
        return self.graph.class_sizes[0]

    @property
    def w0(self) -> np.ndarray:
        return np.flatnonzero(self.slot == W0)

    def split_id(self, k: int, j: int) -> int:
        return k * self.q + j

    def members(self, k: int, j: int) -> np.ndarray:
        return np.flatnonzero((self.slot == k) & (self.graph.class_of == j))

    def sizes(self) -> np.ndarray:
        """``(K, q)`` cluster sizes."""
        placed = self.slot != W0
        ids = self.slot[placed] * self.q + self.graph.class_of[placed]
        return np.bincount(ids, minlength=self.K * self.q).reshape(self.K, self.q)

    def slot_degrees(self) -> np.ndarray:
        """``(V, K, q)`` neighbour counts of every vertex in every split cluster."""
        V = self.graph.n_vertices
        placed = np.flatnonzero(self.slot != W0)
        ind = np.zeros((V, self.K * self.q), dtype=np.float32)
        ind[placed, self.slot[placed] * self.q + self.graph.class_of[placed]] = 1.0
        deg = self.graph.adj.astype(np.float32) @ ind
        return np.rint(deg).astype(np.int64).reshape(V, self.K, self.q)

    def adjacency_mask(self, threshold: float, deg: np.ndarray | None = None) -> np.ndarray:
        """``(V, K)``: vertex ``v`` clears ``threshold * size`` in every other-class cluster of clique ``k``."""
        if deg is None:
            deg = self.slot_degrees()
        sizes = self.sizes()
        ok = deg >= threshold * sizes[None, :, :] - _TOL
        V = self.graph.n_vertices
        ok[np.arange(V), :, self.graph.class_of] = True
        return ok.all(axis=2)

    def assert_w0_bound(self, phase: str) -> None:
        size = len(self.w0)
        self.w0_history[phase] = size
        if size > self.w0_bound:
            raise InstanceNotRegularEnough(
                f"after {phase} the exceptional set holds {size} vertices, bound {self.w0_bound}",
                {"phase": phase, "w0": size, "bound": self.w0_bound})

    def summary(self) -> dict:
        sz = self.sizes()
        return {"cliques": self.K, "w0": int(len(self.w0)), "min_size": int(sz.min()) if sz.size else 0,
                "max_size": int(sz.max()) if sz.size else 0}


def split_clusters(bi: BlowupInstance, factor: CliqueFactor, seed: int = 0,
                   eps: float | None = None) -> BlownInstance:
    """Cut every cluster's vertices at random into one near-equal piece per clique containing it."""
    g = bi.graph
    q = factor.q
    parent = bi.cluster_of
    slot = np.full(g.n_vertices, W0, dtype=np.int64)
    cl = factor.cliques
    m = bi.m
    for U in range(bi.clusters.graph.n_vertices):
        j = int(bi.clusters.graph.class_of[U])
        ks = np.flatnonzero(cl[:, j] == U)
        if len(ks) == 0:
            raise InvariantViolation(f"cluster {U} lies in no clique")
        if len(ks) > m:
            raise InstanceNotRegularEnough(
                f"cluster {U} must be cut into {len(ks)} pieces but holds only {m} vertices",
                {"cluster": U, "pieces": int(len(ks)), "m": m})
        verts = np.arange(U * m, (U + 1) * m)
        verts = verts[derive(seed, "vertex-split", U).permutation(m)]
        for k, part in zip(ks, np.array_split(verts, len(ks))):
            slot[part] = k
    eps = bi.eps if eps is None else eps
    w0_bound = math.ceil(4 * eps * g.n_vertices)
    return BlownInstance(g, bi.clusters, parent, factor, slot, bi.d, eps, w0_bound)


# --------------------------------------------------------------------------
# trimming

@dataclass
class TrimReport:
    removed: int
    rounds: int
    discard_fraction: np.ndarray      # (K, q) fraction of each cluster moved to W0

    def to_json(self) -> dict:
        return {"removed": self.removed, "rounds": self.rounds,
                "max_discard_fraction": float(self.discard_fraction.max()) if self.discard_fraction.size else 0.0}


def trim_cliques(inst: BlownInstance, eps: float | None = None, d=None,
                 max_loss: float | None = None) -> tuple[BlownInstance, TrimReport]:
    """Move to ``W0`` every vertex with fewer than ``(d - 3 eps)`` times a partner cluster's size
    neighbours there, until no such vertex remains."""
    eps = inst.eps if eps is None else float(eps)
    d = inst.d if d is None else as_fraction(d)
    if max_loss is None:
        max_loss = float(calib("stage_two", "max_trim_loss"))
    floor = float(d) - 3 * eps
    out = inst.copy()
    start = out.sizes()
    rounds = 0
    removed = 0
    cls = out.graph.class_of
    while True:
        deg = out.slot_degrees()
        sizes = out.sizes()
        placed = np.flatnonzero(out.slot != W0)
        k = out.slot[placed]
        low = deg[placed, k, :] < floor * sizes[k, :] - _TOL
        low[np.arange(len(placed)), cls[placed]] = False
        drop = placed[low.any(axis=1)]
        if len(drop) == 0:
            break
        rounds += 1
        for v in drop:
            out.log.append(MoveEvent("trim", int(v), int(out.slot[v]), W0,
                                     tuple(int(x) for x in deg[v, out.slot[v]])))
        out.slot[drop] = W0
        removed += len(drop)
    end = out.sizes()
    frac = np.where(start > 0, (start - end) / np.maximum(start, 1), 0.0)
    if frac.size and frac.max() > max_loss + _TOL:
        k, j = np.unravel_index(int(np.argmax(frac)), frac.shape)
        raise InstanceNotRegularEnough(
            f"trimming removed {frac[k, j]:.0%} of cluster {int(k) * out.q + int(j)}",
            {"clique": int(k), "class": int(j), "fraction": float(frac[k, j]), "limit": max_loss,
             "removed": removed})
    out.assert_w0_bound("trim")
    return out, TrimReport(removed, rounds, frac)


def clique_adjacent(v: int, clique: int, inst: BlownInstance, d=None) -> bool:
    """``v`` has at least ``d`` times the cluster size neighbours in every cluster of ``clique``
    outside its own class."""
    d = float(inst.d if d is None else d)
    j0 = int(inst.graph.class_of[v])
    row = inst.graph.adj[v]
    for j in range(inst.q):
        if j == j0:
            continue
        members = inst.members(clique, j)
        if int(row[members].sum()) < d * len(members) - _TOL:
            return False
    return True


# --------------------------------------------------------------------------
# cluster-level structure: L_i digraphs and adjacent-clique counts

def _parent_clique_adjacency(C: ClusterGraph, F: CliqueFactor, i: int) -> np.ndarray:
    """``(N_i, K)``: class-``i`` cluster ``U`` is adjacent to every other-class parent of clique ``k``."""
    adj = C.graph.adj
    ids = np.asarray(C.graph.classes[i])
    ok = np.ones((len(ids), F.n_cliques), dtype=bool)
    for j in range(F.q):
        if j != i:
            ok &= adj[np.ix_(ids, F.cliques[:, j])]
    return ok


@dataclass
class CliqueDigraph:
    """Per class ``i``, ``arcs[i][k1, k2]``: the class-``i`` cluster of clique ``k1`` is adjacent
    to the clique ``k2``."""

    q: int
    arcs: tuple[np.ndarray, ...]

    def reachable_within_two(self, i: int) -> np.ndarray:
        a = self.arcs[i].astype(np.int64)
        r = (a + a @ a) > 0
        np.fill_diagonal(r, True)
        return r

    def all_pairs_within_two(self) -> bool:
        return all(self.reachable_within_two(i).all() for i in range(self.q))

    def reachability_fraction(self) -> float:
        total = sum(self.arcs[i].shape[0] ** 2 for i in range(self.q))
        hit = sum(int(self.reachable_within_two(i).sum()) for i in range(self.q))
        return hit / total if total else 1.0


def build_clique_digraph(C: ClusterGraph, F: CliqueFactor, i: int | None = None) -> CliqueDigraph:
    """``L_i`` for one class (others left empty) or for all classes."""
    K = F.n_cliques
    arcs = []
    for c in range(F.q):
        if i is not None and c != i:
            arcs.append(np.zeros((K, K), dtype=bool))
            continue
        par = _parent_clique_adjacency(C, F, c)
        row_of = {int(u): r for r, u in enumerate(C.graph.classes[c])}
        rows = np.array([row_of[int(u)] for u in F.cliques[:, c]], dtype=np.int64)
        a = par[rows].copy()
        np.fill_diagonal(a, False)
        arcs.append(a)
    return CliqueDigraph(F.q, tuple(arcs))


@dataclass
class AdjacencyStats:
    """Counts of cliques holding a copy of ``U2`` whose other clusters are all adjacent to ``U1``."""

    bound: float
    counts: np.ndarray           # one entry per ordered pair (U1, U2), same class, U1 != U2
    pairs: np.ndarray

    @property
    def pass_fraction(self) -> float:
        return float((self.counts > self.bound).mean()) if len(self.counts) else 1.0

    def to_json(self) -> dict:
        return {"bound": self.bound, "pairs": int(len(self.counts)),
                "pass_fraction": self.pass_fraction,
                "min_count": int(self.counts.min()) if len(self.counts) else None}


def adjacency_bound(psi: float, sizes) -> float:
    """``psi^2 / 8`` times the bottom size times every size from the third on."""
    sizes = list(sizes)
    if len(sizes) < 2:
        return 0.0
    return psi * psi / 8.0 * sizes[-1] * math.prod(sizes[2:])


def adjacency_statistics(C: ClusterGraph, F: CliqueFactor, psi: float) -> AdjacencyStats:
    counts, pairs = [], []
    for i in range(F.q):
        par = _parent_clique_adjacency(C, F, i)
        ids = np.asarray(C.graph.classes[i])
        for b, U2 in enumerate(ids):
            ks = F.cliques[:, i] == U2
            per_u1 = par[:, ks].sum(axis=1)
            for a, U1 in enumerate(ids):
                if a != b:
                    counts.append(int(per_u1[a]))
                    pairs.append((int(U1), int(U2)))
    return AdjacencyStats(adjacency_bound(psi, F.sizes), np.asarray(counts, dtype=np.int64),
                          np.asarray(pairs, dtype=np.int64).reshape(-1, 2))


def realized_psi(F: CliqueFactor) -> float:
    """Margin above 1/2 of the measured degree ratio at the matching level."""
    levels = F.provenance.get("levels", [])
    if not levels:
        return 0.0
    return max(float(Fraction(levels[-1]["delta"])) - 0.5, 0.0)


def w0_cap(n_w0: int, psi: float, sizes, n_cliques: int) -> int:
    """``ceil(|W0| / (c ell_hat))`` with ``c = s_last psi^2 / (8 s_2)``."""
    if n_w0 == 0:
        return 0
    sizes = list(sizes)
    s2 = sizes[1] if len(sizes) > 1 else sizes[0]
    c = sizes[-1] * psi * psi / (8.0 * s2)
    if c * n_cliques <= 0:
        return n_w0
    return max(1, math.ceil(n_w0 / (c * n_cliques) - _TOL))


# --------------------------------------------------------------------------
# redistribution

@dataclass
class RedistributionReport:
    placed: int
    cap: int
    adjacent_counts: np.ndarray      # adjacent cliques per W0 vertex
    fallback_flow: bool

    def to_json(self) -> dict:
        return {"placed": self.placed, "cap": self.cap, "fallback_flow": self.fallback_flow,
                "min_adjacent_cliques": int(self.adjacent_counts.min()) if len(self.adjacent_counts) else None}


def redistribute_w0(inst: BlownInstance, threshold: float | None = None,
                    cap: int | None = None) -> tuple[BlownInstance, RedistributionReport]:
    """Place every ``W0`` vertex into its class's cluster of a clique it is adjacent to.

    Vertices go greedily to the least-loaded permitted cluster; if that
    strands a vertex, the assignment is recomputed as a capacitated
    b-matching, whose failure is certified.
    """
    out = inst.copy()
    w0 = out.w0
    if threshold is None:
        threshold = float(out.d) - out.eps
    psi = realized_psi(out.factor)
    if cap is None:
        cap = w0_cap(len(w0), psi, out.factor.sizes, out.K)
    if len(w0) == 0:
        out.assert_w0_bound("redistribute")
        return out, RedistributionReport(0, cap, np.zeros(0, dtype=np.int64), False)
    deg = out.slot_degrees()
    mask = out.adjacency_mask(threshold, deg)[w0]            # (|W0|, K)
    counts = mask.sum(axis=1)
    load = np.zeros((out.K, out.q), dtype=np.int64)
    sizes = out.sizes()
    cls = out.graph.class_of
    choice = np.full(len(w0), -1, dtype=np.int64)
    for t, v in enumerate(w0):
        j = cls[v]
        ks = np.flatnonzero(mask[t] & (load[:, j] < cap))
        if len(ks) == 0:
            break
        k = ks[np.lexsort((ks, sizes[ks, j] + load[ks, j]))[0]]
        choice[t] = k
        load[k, j] += 1
    fallback = bool((choice < 0).any())
    if fallback:
        # vertices x split clusters, capacity cap on every cluster
        perm = np.zeros((len(w0), out.K * out.q), dtype=np.uint8)
        for t, v in enumerate(w0):
            perm[t, np.flatnonzero(mask[t]) * out.q + cls[v]] = 1
        sel = np.zeros_like(perm)
        total = kernels.bmatch(perm, np.ones(len(w0), dtype=np.int32),
                               np.full(perm.shape[1], cap, dtype=np.int32), sel)
        if total < len(w0):
            stranded = [int(w0[t]) for t in np.flatnonzero(sel.sum(axis=1) == 0)]
            raise RedistributionFailure(
                f"{len(stranded)} exceptional vertices cannot be placed under cap {cap}",
                {"stranded": stranded, "adjacent_cliques": [int(counts[list(w0).index(v)]) for v in stranded],
                 "cap": cap, "threshold": threshold})
        choice = np.argmax(sel, axis=1) // out.q
    for t, v in enumerate(w0):
        k = int(choice[t])
        out.log.append(MoveEvent("redistribute", int(v), W0, k, tuple(int(x) for x in deg[v, k])))
        out.slot[v] = k
    out._check_slots()
    out.assert_w0_bound("redistribute")
    return out, RedistributionReport(len(w0), cap, counts, fallback)


# --------------------------------------------------------------------------
# balancing

def clique_targets(inst: BlownInstance) -> np.ndarray:
    """Common target size per clique: ``floor(n / K)`` or one more, the larger targets going to the
    cliques that currently hold the most vertices."""
    n, K = inst.n, inst.K
    base, extra = divmod(n, K)
    totals = inst.sizes().sum(axis=1)
    order = np.lexsort((np.arange(K), -totals))
    t = np.full(K, base, dtype=np.int64)
    t[order[:extra]] += 1
    return t


@dataclass
class RebalanceReport:
    moves: int
    flow_cost: int
    targets: np.ndarray
    in_moves: np.ndarray     # (K, q)
    out_moves: np.ndarray    # (K, q)
    move_bound: int
    initial_discrepancy: int

    @property
    def within_caps(self) -> bool:
        return bool(self.in_moves.max(initial=0) <= self.move_bound
                    and self.out_moves.max(initial=0) <= self.move_bound)

    def to_json(self) -> dict:
        return {"moves": self.moves, "flow_cost": self.flow_cost, "move_bound": self.move_bound,
                "initial_discrepancy": self.initial_discrepancy, "within_caps": self.within_caps,
                "max_in": int(self.in_moves.max(initial=0)), "max_out": int(self.out_moves.max(initial=0))}


def rebalance(inst: BlownInstance, threshold: float | None = None, w0_original: int = 0,
              targets: np.ndarray | None = None) -> tuple[BlownInstance, RebalanceReport]:
    """Equalise cluster sizes within every clique by moving vertices along ``L_i`` arcs.

    Per class, a min-cost flow on the ``L_i`` digraph (unit cost per arc, arc
    capacity = vertices of the source cluster adjacent to the target clique)
    routes every surplus to a deficit; the flow is then executed by moving,
    per arc, the eligible vertices with the most neighbours in the target
    clique.
    """
    out = inst.copy()
    if len(out.w0):
        raise InvariantViolation("rebalance needs an empty exceptional set")
    if threshold is None:
        threshold = float(out.d) - out.eps
    q, K = out.q, out.K
    if targets is None:
        targets = clique_targets(out)
    sizes0 = out.sizes()
    excess0 = sizes0 - targets[:, None]
    disc = int(np.abs(excess0).max(initial=0))
    psi = realized_psi(out.factor)
    move_bound = 2 * w0_cap(w0_original, psi, out.factor.sizes, K) + disc
    digraph = build_clique_digraph(out.clusters, out.factor)
    in_moves = np.zeros((K, q), dtype=np.int64)
    out_moves = np.zeros((K, q), dtype=np.int64)
    moves = 0
    cost = 0
    cls = out.graph.class_of
    for j in range(q):
        excess = out.sizes()[:, j] - targets
        if not excess.any():
            continue
        deg = out.slot_degrees()
        mask = out.adjacency_mask(threshold, deg)          # depends only on other classes
        members = [out.members(k, j) for k in range(K)]
        G = nx.DiGraph()
        for k in range(K):
            G.add_node(k, demand=-int(excess[k]))
        arcs = digraph.arcs[j]
        for k1, k2 in zip(*np.nonzero(arcs)):
            capacity = int(mask[members[k1], k2].sum())
            if capacity:
                G.add_edge(int(k1), int(k2), weight=1, capacity=capacity)
        try:
            flow_cost, flow = nx.network_simplex(G)
        except (nx.NetworkXUnfeasible, nx.NetworkXUnbounded) as exc:
            raise RebalanceFailure(
                f"class {j}: surplus cannot be routed to deficits ({exc})",
                {"class": j, "excess": {int(k): int(e) for k, e in enumerate(excess) if e},
                 "arcs": int(arcs.sum())}) from None
        cost += int(flow_cost)
        taken = np.zeros(out.graph.n_vertices, dtype=bool)
        plan = []
        for k1 in sorted(flow):
            for k2 in sorted(flow[k1]):
                f = int(flow[k1][k2])
                if f == 0:
                    continue
                cand = members[k1]
                cand = cand[mask[cand, k2] & ~taken[cand]]
                score = deg[cand, k2, :].sum(axis=1) - deg[cand, k2, j]
                cand = cand[np.lexsort((cand, -score))]
                if len(cand) < f:
                    raise RebalanceFailure(
                        f"class {j}: only {len(cand)} of {f} required vertices can move from clique {k1} to {k2}",
                        {"class": j, "source": int(k1), "dest": int(k2), "required": f,
                         "eligible": int(len(cand))})
                taken[cand[:f]] = True
                plan.append((k1, k2, cand[:f]))
        for k1, k2, vs in plan:
            for v in vs:
                out.log.append(MoveEvent("rebalance", int(v), int(k1), int(k2),
                                         tuple(int(x) for x in deg[v, k2])))
            out.slot[vs] = k2
            out_moves[k1, j] += len(vs)
            in_moves[k2, j] += len(vs)
            moves += len(vs)
    final = out.sizes()
    if not (final == targets[:, None]).all():
        k, j = np.argwhere(final != targets[:, None])[0]
        raise RebalanceFailure(f"cluster {int(k) * q + int(j)} ended with {final[k, j]} vertices, target {targets[k]}",
                               {"clique": int(k), "class": int(j), "size": int(final[k, j]),
                                "target": int(targets[k])})
    out._check_slots()
    out.assert_w0_bound("rebalance")
    return out, RebalanceReport(moves, cost, targets, in_moves, out_moves, move_bound, disc)


def audit_moves(inst: BlownInstance, threshold: float) -> list[str]:
    """Replay the relocation log from the initial split and recheck every move into a clique."""
    problems = []
    replay = inst.slot.copy()
    # undo the log to recover the starting placement
    for ev in reversed(inst.log):
        replay[ev.vertex] = ev.source
    probe = BlownInstance(inst.graph, inst.clusters, inst.parent, inst.factor, replay,
                          inst.d, inst.eps, inst.w0_bound)
    for ev in inst.log:
        if ev.dest != W0 and not clique_adjacent(ev.vertex, ev.dest, probe, threshold):
            problems.append(f"{ev.phase}: vertex {ev.vertex} moved into clique {ev.dest} without adjacency")
        probe.slot[ev.vertex] = ev.dest
    return problems


# --------------------------------------------------------------------------
# embedding

@dataclass
class EmbeddingResult:
    cliques: np.ndarray               # (T, q) vertex ids, column j from class j
    attempts: tuple[int, ...]         # per factor clique
    repairs: tuple[int, ...]

    def to_json(self) -> dict:
        return {"n_cliques": int(len(self.cliques)), "max_attempts": max(self.attempts, default=0),
                "repairs": int(sum(self.repairs)), "cliques": self.cliques.tolist()}


def _is_clique(adj: np.ndarray, group) -> bool:
    g = np.asarray(group)
    sub = adj[np.ix_(g, g)]
    return bool(sub[~np.eye(len(g), dtype=bool)].all())


def _stage_matrix(adj: np.ndarray, groups: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Group ``a`` is compatible with vertex ``b`` when every member of ``a`` is adjacent to ``b``."""
    ok = np.ones((groups.shape[0], len(targets)), dtype=bool)
    for p in range(groups.shape[1]):
        ok &= adj[np.ix_(groups[:, p], targets)]
    return ok.astype(np.uint8)


def _matching_size(adj, groups, targets) -> tuple[int, np.ndarray]:
    m = _stage_matrix(adj, groups, targets)
    ml = np.full(m.shape[0], -1, dtype=np.int32)
    mr = np.full(m.shape[1], -1, dtype=np.int32)
    size = kernels.hopcroft_karp(np.ascontiguousarray(m), ml, mr)
    return size, ml


def _repair(adj, groups, targets, rng, budget) -> tuple[np.ndarray | None, int]:
    """Local search: swap one member between an unmatched group and another group while both stay
    cliques, keeping swaps that do not shrink the maximum matching."""
    groups = groups.copy()
    n, t = groups.shape
    size, ml = _matching_size(adj, groups, targets)
    steps = 0
    while size < n and steps < budget:
        steps += 1
        free = np.flatnonzero(ml < 0)
        x = int(free[rng.integers(len(free))])
        y = int(rng.integers(n))
        p = int(rng.integers(t))
        if x == y:
            continue
        gx, gy = groups[x].copy(), groups[y].copy()
        gx[p], gy[p] = gy[p], gx[p]
        if not (_is_clique(adj, gx) and _is_clique(adj, gy)):
            continue
        groups[x], groups[y] = gx, gy
        new_size, new_ml = _matching_size(adj, groups, targets)
        if new_size >= size:
            size, ml = new_size, new_ml
        else:
            groups[x], groups[y] = gy, gx
    return (groups if size == n else None), steps


def embed_clique(adj: np.ndarray, clusters: list[np.ndarray], seed: int,
                 attempts: int | None = None, plain: int | None = None,
                 steps_per_vertex: int | None = None) -> tuple[np.ndarray, int, int]:
    """Cover equal-size clusters by disjoint cliques, one vertex from each.

    Returns the ``(size, q)`` cliques, the attempts used and the repair steps spent.
    """
    attempts = int(calib("stage_two", "embed_attempts")) if attempts is None else attempts
    plain = int(calib("stage_two", "embed_plain_attempts")) if plain is None else plain
    if steps_per_vertex is None:
        steps_per_vertex = int(calib("stage_two", "repair_steps_per_vertex"))
    size = len(clusters[0])
    if any(len(c) != size for c in clusters):
        raise InvariantViolation("clusters of one clique must have equal sizes")
    q = len(clusters)
    if size == 0:
        return np.zeros((0, q), dtype=np.int64), 0, 0
    repairs = 0
    for attempt in range(attempts):
        rng = derive(seed, "embed-attempt", attempt)
        order = [np.asarray(c)[rng.permutation(size)] for c in clusters]
        groups = order[0][:, None]
        for t in range(1, q):
            got, ml = _matching_size(adj, groups, order[t])
            if got < size and attempt >= plain:
                fixed, steps = _repair(adj, groups, order[t], rng, steps_per_vertex * size)
                repairs += steps
                if fixed is not None:
                    groups = fixed
                    got, ml = _matching_size(adj, groups, order[t])
            if got < size:
                break
            groups = np.column_stack([groups, order[t][ml]])
        else:
            return groups, attempt + 1, repairs
    raise EmbeddingFailure(f"no clique cover after {attempts} attempts", {"attempts": attempts})


def embed(inst: BlownInstance, seed: int = 0) -> EmbeddingResult:
    """Vertex-level K_q-factor, clique by clique of the factor."""
    sizes = inst.sizes()
    if len(inst.w0):
        raise InvariantViolation("embedding needs an empty exceptional set")
    adj = inst.graph.adj
    parts, att, rep = [], [], []
    for k in range(inst.K):
        if len(set(sizes[k].tolist())) != 1:
            raise InvariantViolation(f"clique {k} has unequal cluster sizes {sizes[k].tolist()}")
        clusters = [inst.members(k, j) for j in range(inst.q)]
        try:
            cl, a, r = embed_clique(adj, clusters, derive_u64(seed, "embed", k))
        except EmbeddingFailure as exc:
            dens = [[float(adj[np.ix_(clusters[i], clusters[j])].mean()) if len(clusters[i]) else 0.0
                     for j in range(inst.q)] for i in range(inst.q)]
            raise EmbeddingFailure(f"clique {k}: {exc}",
                                   {"clique": k, "density": dens, "size": int(sizes[k, 0]),
                                    **exc.certificate}) from None
        parts.append(cl)
        att.append(a)
        rep.append(r)
    cliques = np.concatenate(parts) if parts else np.zeros((0, inst.q), dtype=np.int64)
    return EmbeddingResult(cliques.astype(np.int64), tuple(att), tuple(rep))


@dataclass
class EmbeddingCertificate:
    ok: bool
    n_cliques: int
    violations: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"ok": self.ok, "n_cliques": self.n_cliques, "violations": list(self.violations)}


def verify_embedding(G: MultipartiteGraph, cliques, max_listed: int = 50) -> EmbeddingCertificate:
    """Disjointness, coverage, one vertex per class and every clique edge present."""
    cl = np.asarray(cliques, dtype=np.int64)
    if cl.ndim != 2:
        cl = cl.reshape(0, G.q)
    viol: list[str] = []
    T = cl.shape[0]
    if cl.shape[1] != G.q:
        return EmbeddingCertificate(False, T, (f"cliques have {cl.shape[1]} vertices, graph has {G.q} classes",))
    if T and (cl.min() < 0 or cl.max() >= G.n_vertices):
        return EmbeddingCertificate(False, T, ("clique references an unknown vertex",))
    seen = np.bincount(cl.ravel(), minlength=G.n_vertices)
    for v in np.flatnonzero(seen > 1)[:max_listed]:
        viol.append(f"disjointness: vertex {v} lies in {seen[v]} cliques")
    missing = np.flatnonzero(seen == 0)
    if len(missing):
        shown = ", ".join(str(int(v)) for v in missing[:max_listed])
        viol.append(f"coverage: {len(missing)} uncovered vertices: {shown}")
    for t in range(T):
        row = cl[t]
        if sorted(G.class_of[row].tolist()) != list(range(G.q)):
            viol.append(f"classes: clique {t} does not take one vertex per class")
        for a in range(G.q):
            for b in range(a + 1, G.q):
                if not G.adj[row[a], row[b]]:
                    viol.append(f"edge: clique {t} misses edge ({int(row[a])}, {int(row[b])})")
        if len(viol) > 4 * max_listed:
            viol.append("further violations not listed")
            break
    return EmbeddingCertificate(not viol, T, tuple(viol))


# --------------------------------------------------------------------------
# the whole second stage

@dataclass
class PipelineReport:
    params: dict
    phases: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)
    w0_sizes: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)
    ok: bool = False
    failure: dict | None = None
    reachability: dict = field(default_factory=dict)
    adjacency: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"params": self.params, "ok": self.ok, "failure": self.failure, "phases": self.phases,
                "timings_ms": self.timings_ms, "w0_sizes": self.w0_sizes, "digests": self.digests,
                "reachability": self.reachability, "adjacency": self.adjacency}


class _Timer:
    def __init__(self, report: PipelineReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings_ms[self.name] = round((time.perf_counter() - self.t) * 1000, 3)
        return False


def _embedding_digest(cliques: np.ndarray) -> str:
    rows = np.asarray(cliques, dtype="<i8")
    order = np.lexsort(rows.T[::-1]) if len(rows) else np.zeros(0, dtype=np.int64)
    return hashlib.sha256(np.ascontiguousarray(rows[order]).tobytes()).hexdigest()


def _sample_regularity(inst: BlownInstance, seed: int, pairs: int = 3) -> dict:
    """Witness search on a few clique pairs at ``2 sqrt(eps)``."""
    eps_hat = min(2 * math.sqrt(inst.eps), 0.99)
    rng = derive(seed, "regularity-sample")
    worst = 0.0
    checked = 0
    adj = inst.graph.adj
    for k in rng.choice(inst.K, size=min(pairs, inst.K), replace=False):
        a = inst.members(int(k), 0)
        b = inst.members(int(k), 1)
        if len(a) < 2 or len(b) < 2:
            continue
        rep = irregularity_witness_search(BipartitePair(adj[np.ix_(a, b)]), eps_hat,
                                          samples=200, seed=derive_u64(seed, "regularity-probe", int(k)))
        worst = max(worst, float(rep.epsilon_hat))
        checked += 1
    return {"eps_hat_bound": eps_hat, "checked": checked, "max_epsilon_hat": worst,
            "within": worst < eps_hat}


def run_pipeline(q: int = 3, ell: int = 6, m: int = 50, d="3/5", seed: int = 0,
                 eps: float | None = None, delta_target=None) -> tuple[PipelineReport, EmbeddingResult | None]:
    """Generate, factor, blow up and embed; certified failures end up in the report."""
    d = as_fraction(d)
    report = PipelineReport({"q": q, "ell": ell, "m": m, "d": frac_str(d), "seed": int(seed),
                             "eps": eps, "delta_target": None if delta_target is None else frac_str(as_fraction(delta_target))})
    result = None
    phase = "generate"
    try:
        with _Timer(report, "generate"):
            C = random_cluster_graph(q, ell, delta_target, seed=derive_u64(seed, "cluster-graph"))
        phase = "factor"
        with _Timer(report, "factor"):
            fr = find_factor(C, seed=derive_u64(seed, "factor"))
            cert = verify_factor(C, fr.factor)
        if not cert.ok:
            raise InvariantViolation(f"factor failed verification: {cert.violations[:3]}")
        F = fr.factor
        report.digests["factor"] = cert.digest
        report.phases["factor"] = {"cliques": F.n_cliques, "sizes": list(F.sizes),
                                   "participation": cert.participation}
        psi = realized_psi(F)
        dg = build_clique_digraph(C, F)
        report.reachability = {"all_pairs_within_two": dg.all_pairs_within_two(),
                               "fraction": dg.reachability_fraction()}
        report.adjacency = {"psi": psi, **adjacency_statistics(C, F, psi).to_json()}
        phase = "blowup"
        with _Timer(report, "blowup"):
            bi = blowup(C, m, d, seed=derive_u64(seed, "blowup"), eps=eps)
            inst = split_clusters(bi, F, seed=derive_u64(seed, "split"))
        report.params["eps"] = inst.eps
        report.phases["blowup"] = {"patched_edges": bi.patched_edges, "pair_edges": bi.pair_edges,
                                   "patch_fraction": bi.patch_fraction}
        phase = "trim"
        with _Timer(report, "trim"):
            inst, tr = trim_cliques(inst)
        report.phases["trim"] = tr.to_json()
        report.w0_sizes["trim"] = int(len(inst.w0))
        w0_orig = int(len(inst.w0))
        phase = "redistribute"
        with _Timer(report, "redistribute"):
            inst, rr = redistribute_w0(inst)
        report.phases["redistribute"] = rr.to_json()
        report.w0_sizes["redistribute"] = int(len(inst.w0))
        phase = "rebalance"
        with _Timer(report, "rebalance"):
            inst, rb = rebalance(inst, w0_original=w0_orig)
        report.phases["rebalance"] = rb.to_json()
        report.phases["audit"] = {"problems": audit_moves(inst, float(inst.d) - inst.eps)}
        report.phases["regularity"] = _sample_regularity(inst, derive_u64(seed, "regularity"))
        phase = "embed"
        with _Timer(report, "embed"):
            result = embed(inst, seed=derive_u64(seed, "embed"))
            ecert = verify_embedding(inst.graph, result.cliques)
        report.phases["embed"] = {"cliques": int(len(result.cliques)),
                                  "attempts": list(result.attempts), "repairs": int(sum(result.repairs)),
                                  "verified": ecert.ok, "violations": list(ecert.violations[:10])}
        report.digests["embedding"] = _embedding_digest(result.cliques)
        report.ok = ecert.ok
        if not ecert.ok:
            report.failure = {"phase": "embed", "kind": "unverified", "message": "embedding failed verification"}
            result = None
    except CertifiedFailure as exc:
        report.failure = {"phase": phase, **exc.to_dict()}
        result = None
    return report, result
