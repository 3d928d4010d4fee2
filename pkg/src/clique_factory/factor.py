"""Clique factors of refinements of balanced cluster graphs.

The recursion pivots on one class, extracts a ``mu``-regular bipartite
subgraph ``R`` between the pivot class and each other class, splits every
non-pivot cluster into ``mu`` copies (one per ``R``-neighbour) and recurses
on the ``(q-1)``-partite subproblem attached to each pivot cluster. Two
classes are finished by a randomised perfect matching.

All subproblems of one level are processed together by the batched kernels.
A subproblem cluster is identified by its level-0 parent (its *root*): split
copies inherit the parent's adjacency, and the copies meeting one subproblem
come from distinct parents, so a subproblem is just an array of roots.
Every level uses one common ``mu`` (the minimum over its subproblems), which
keeps every clique at the same exact weight.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels as _default_kernels
from .calibration import get as calib
from .errors import (InstanceTooSmall, InvalidArgument, InvalidInstance, InvariantViolation,
                     MatchingFailure, RegularSubgraphInfeasible, ThresholdViolation)
from .graph import MultipartiteGraph, proportional_min_degree
from .rng import derive, derive_u64, mix_seeds
from .thresholds import (HALF, delta_of_q, floor_rho_times, gamma_of_q, recursed_delta, s_table,
                         SLACK)


def frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_frac(text) -> Fraction:
    return Fraction(str(text))


class ClusterGraph:
    """A balanced multipartite graph of clusters, all of the same exact weight."""

    def __init__(self, graph: MultipartiteGraph, weight=1, spec=None):
        if not graph.balanced:
            raise InvalidInstance(f"cluster graph must be balanced, sizes {graph.class_sizes}")
        w = Fraction(weight)
        if w <= 0:
            raise InvalidArgument("cluster weight must be positive")
        self.graph = graph
        self.weight = w
        self.spec = spec      # generator description, if any

    @property
    def q(self) -> int:
        return self.graph.q

    @property
    def ell(self) -> int:
        return self.graph.class_sizes[0]

    @property
    def n_clusters(self) -> int:
        return self.graph.n_vertices

    def weight_of(self, u: int) -> Fraction:
        if not 0 <= u < self.n_clusters:
            raise InvalidArgument(f"unknown cluster {u}")
        return self.weight

    def class_weight(self, j: int) -> Fraction:
        return self.weight * len(self.graph.classes[j])

    def to_json(self) -> dict:
        out = self.graph.to_json()
        out["weight"] = frac_str(self.weight)
        if self.spec is not None:
            out["generator"] = self.spec.to_json() if hasattr(self.spec, "to_json") else dict(self.spec)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ClusterGraph":
        from .generators import GeneratorSpec   # generators builds on this module
        spec = data.get("generator")
        return cls(MultipartiteGraph.from_json(data), parse_frac(data.get("weight", "1")),
                   GeneratorSpec.from_json(spec) if spec is not None else None)


# --------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class LevelRecord:
    level: int
    classes: int            # classes still present at this level
    subproblems: int
    size: int               # clusters per class in every subproblem
    min_degree: int         # minimum cross degree over all subproblems
    delta: Fraction         # min_degree / size
    mu: int | None          # regular degree used (None at the matching level)
    retried: bool = False
    subproblem_min_degree: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {"level": self.level, "classes": self.classes, "subproblems": self.subproblems,
                "size": self.size, "min_degree": self.min_degree, "delta": frac_str(self.delta),
                "delta_float": float(self.delta), "mu": self.mu, "retried": self.retried}


@dataclass(frozen=True)
class CliqueFactor:
    """Cliques of split clusters, one slot per class, all of equal weight.

    ``cliques[k, j]`` is the level-0 parent of the class-``j`` split cluster
    of clique ``k``. Clique ``k`` has weight ``weight_mult[k] * weight_unit``.
    ``class_order`` is the pivot order used, and ``blocks[t]`` is the number of
    cliques that descend from one subproblem at level ``t`` (so cliques of one
    subproblem are contiguous).
    """

    q: int
    cliques: np.ndarray
    weight_unit: Fraction
    weight_mult: np.ndarray
    class_order: tuple[int, ...] = ()
    blocks: tuple[int, ...] = ()
    sizes: tuple[int, ...] = ()
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def n_cliques(self) -> int:
        return int(self.cliques.shape[0])

    def weight(self, k: int) -> Fraction:
        return int(self.weight_mult[k]) * self.weight_unit

    @property
    def uniform(self) -> bool:
        return bool(self.n_cliques == 0 or (self.weight_mult == self.weight_mult[0]).all())

    def participation(self, n_clusters: int) -> np.ndarray:
        return np.bincount(self.cliques.ravel(), minlength=n_clusters)

    def lineage(self, k: int, j: int) -> list[int]:
        """Identity of the split cluster in slot ``(k, j)``.

        The pivot parents of every enclosing subproblem, followed, for a
        cluster split at its own pivot level, by its copy index there.
        """
        if not self.class_order:
            return []
        pos = self.class_order.index(j)
        q = self.q
        row = self.cliques[k]
        if q == 2:
            return []
        depth = min(pos, q - 2)
        path = [int(row[self.class_order[t]]) for t in range(depth)]
        if pos <= q - 3:
            path.append(int(k % self.blocks[pos + 1]))
        return path

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"q={self.q};unit={frac_str(self.weight_unit)};order={list(self.class_order)};".encode())
        h.update(np.ascontiguousarray(self.cliques, dtype="<i4").tobytes())
        h.update(np.ascontiguousarray(self.weight_mult, dtype="<i8").tobytes())
        return h.hexdigest()

    def to_json(self) -> dict:
        cliques = []
        for k in range(self.n_cliques):
            w = frac_str(self.weight(k))
            cliques.append([[int(self.cliques[k, j]), self.lineage(k, j), w] for j in range(self.q)])
        return {"q": self.q, "weight_unit": frac_str(self.weight_unit),
                "class_order": list(self.class_order), "blocks": list(self.blocks),
                "sizes": list(self.sizes), "digest": self.digest(),
                "provenance": self.provenance, "cliques": cliques}

    @classmethod
    def from_json(cls, data: dict) -> "CliqueFactor":
        q = int(data["q"])
        raw = data["cliques"]
        parents = np.zeros((len(raw), q), dtype=np.int32)
        weights = []
        for k, clique in enumerate(raw):
            if len(clique) != q:
                raise InvalidInstance(f"clique {k} has {len(clique)} slots, expected {q}")
            ws = {parse_frac(slot[2]) for slot in clique}
            if len(ws) != 1:
                raise InvalidInstance(f"clique {k} carries different weights in its slots")
            weights.append(ws.pop())
            parents[k] = [int(slot[0]) for slot in clique]
        unit = _fraction_gcd(weights) if weights else parse_frac(data.get("weight_unit", "1"))
        mult = np.array([int(w / unit) for w in weights], dtype=np.int64)
        return cls(q, parents, unit, mult, tuple(data.get("class_order", ())),
                   tuple(data.get("blocks", ())), tuple(data.get("sizes", ())),
                   dict(data.get("provenance", {})))


def _fraction_gcd(values: Sequence[Fraction]) -> Fraction:
    den = 1
    for v in values:
        den = den * v.denominator // math.gcd(den, v.denominator)
    num = 0
    for v in values:
        num = math.gcd(num, v.numerator * (den // v.denominator))
    return Fraction(num, den)


class RefinedClusterGraph:
    """The refinement on which a factor lives; split clusters are clique slots.

    Split cluster ``k * q + j`` is the class-``j`` member of clique ``k``. It
    carries its parent's adjacency and the clique's weight.
    """

    def __init__(self, base: ClusterGraph, factor: CliqueFactor):
        self.base = base
        self.factor = factor

    @property
    def n_clusters(self) -> int:
        return self.factor.n_cliques * self.factor.q

    def parent(self, sid: int) -> int:
        k, j = divmod(sid, self.factor.q)
        return int(self.factor.cliques[k, j])

    def class_of(self, sid: int) -> int:
        return sid % self.factor.q

    def weight(self, sid: int) -> Fraction:
        return self.factor.weight(sid // self.factor.q)

    def lineage(self, sid: int) -> tuple[int, list[int]]:
        k, j = divmod(sid, self.factor.q)
        return self.parent(sid), self.factor.lineage(k, j)

    def adjacent(self, s1: int, s2: int) -> bool:
        return bool(self.base.graph.adj[self.parent(s1), self.parent(s2)])

    def class_weight(self, j: int) -> Fraction:
        return self.factor.weight_unit * int(self.factor.weight_mult.sum())


@dataclass(frozen=True)
class FactorResult:
    refined: RefinedClusterGraph
    factor: CliqueFactor
    levels: tuple[LevelRecord, ...]
    delta0: Fraction
    regular_subgraphs: tuple = ()          # top-level R matrices, if kept

    @property
    def realized_sizes(self) -> tuple[int, ...]:
        return self.factor.sizes


# --------------------------------------------------------------------------
# sigma assignment

@dataclass(frozen=True)
class SigmaAssignment:
    """``target[U, c]``: pivot cluster receiving copy ``c`` of parent ``U`` (one array per class)."""

    mu: int
    targets: tuple[np.ndarray, ...]

    def fibre(self, i: int, w: int) -> list[tuple[int, int]]:
        t = self.targets[i]
        us, cs = np.nonzero(t == w)
        return [(int(u), int(c)) for u, c in zip(us, cs)]

    def fibre_sizes(self, i: int, n_pivot: int) -> np.ndarray:
        return np.bincount(self.targets[i].ravel(), minlength=n_pivot)


def sigma_assign(regular: Sequence[np.ndarray], mu: int, seed: int) -> SigmaAssignment:
    """Random bijection, per parent, between its ``mu`` copies and its ``R``-neighbours.

    ``regular[i]`` is the ``mu``-regular biadjacency matrix with pivot clusters
    as rows and the clusters of class ``i`` as columns.
    """
    targets = []
    for i, r in enumerate(regular):
        r = np.asarray(r, dtype=bool)
        if not ((r.sum(axis=0) == mu).all() and (r.sum(axis=1) == mu).all()):
            raise InvariantViolation(f"R for class {i} is not {mu}-regular")
        rng = derive(seed, "sigma", i)
        t = np.empty((r.shape[1], mu), dtype=np.int64)
        for u in range(r.shape[1]):
            t[u] = rng.permutation(np.flatnonzero(r[:, u]))
        targets.append(t)
    return SigmaAssignment(mu, tuple(targets))


# --------------------------------------------------------------------------
# the recursion

def threshold_floor(q: int) -> float:
    """Smallest accepted proportional minimum degree at the top level."""
    if q == 2:
        return 0.5
    return float(delta_of_q(q)) - gamma_of_q(q)


def _regular_level(adj, roots, mu, kern):
    S, c, L = roots.shape
    lroots = np.ascontiguousarray(np.repeat(roots[:, :1, :], c - 1, axis=1).reshape(-1, L))
    rroots = np.ascontiguousarray(roots[:, 1:, :].reshape(-1, L))
    out = np.zeros((lroots.shape[0], L, L), dtype=np.uint8)
    ok = kern.batch_regular(adj, lroots, rroots, int(mu), out)
    return out, ok.astype(bool), lroots, rroots


def find_factor(C: ClusterGraph, q: int | None = None, seed: int = 0, enforce_threshold: bool = True,
                keep_regular: bool = False, trace: bool = False, kern=None) -> FactorResult:
    """Clique factor of a refinement of ``C``.

    Raises a certified failure when the threshold, a regular subgraph or a
    base-case matching cannot be met.
    """
    kern = kern or _default_kernels
    g = C.graph
    if q is None:
        q = g.q
    if q != g.q:
        raise InvalidInstance(f"instance has {g.q} classes, q={q} requested")
    if q < 2:
        raise InvalidArgument("q must be at least 2")
    ell = C.ell
    delta0 = proportional_min_degree(g)
    floor = threshold_floor(q)
    if enforce_threshold and float(delta0) < floor - SLACK:
        raise ThresholdViolation(
            f"proportional minimum degree {float(delta0):.6f} is below the accepted floor {floor:.6f}",
            {"delta": frac_str(delta0), "delta_float": float(delta0), "floor": floor, "q": q})
    if q >= 3:
        s_table(q, ell)  # raises InstanceTooSmall when some guaranteed size is zero

    order = tuple(int(x) for x in derive(seed, "pivot-order").permutation(q))
    adj = np.ascontiguousarray(g.adj, dtype=np.uint8)
    roots = np.stack([np.asarray(g.classes[j], dtype=np.int32) for j in order])[None, :, :]
    roots = np.ascontiguousarray(roots)
    levels: list[LevelRecord] = []
    pivots: list[np.ndarray] = []
    kept_r = ()
    sizes = [ell]

    for level in range(q - 2):
        S, c, L = roots.shape
        mind = kern.min_cross_degree(adj, roots)
        D = int(mind.min())
        delta = Fraction(D, L)
        if delta < HALF:
            raise ThresholdViolation(
                f"level {level}: proportional minimum degree {float(delta):.4f} fell below 1/2",
                {"level": level, "delta": frac_str(delta), "size": L,
                 "subproblem": int(np.argmin(mind))})
        mu = floor_rho_times(delta, L)
        if mu == 0:
            raise InstanceTooSmall(f"level {level}: regular degree rounds down to zero",
                                   {"level": level, "size": L, "delta": frac_str(delta)})
        retried = False
        out, ok, lroots, rroots = _regular_level(adj, roots, mu, kern)
        if not ok.all() and mu > 1:
            retried = True
            mu -= 1
            out, ok, lroots, rroots = _regular_level(adj, roots, mu, kern)
        if not ok.all():
            p = int(np.flatnonzero(~ok)[0])
            from .bipartite import extract_regular
            try:
                extract_regular(adj[np.ix_(lroots[p], rroots[p])], mu)
                cert = {}
            except RegularSubgraphInfeasible as exc:
                cert = exc.certificate
            raise RegularSubgraphInfeasible(
                f"level {level}: no {mu}-regular subgraph between pivot class {order[level]} "
                f"and class {order[level + 1 + p % (c - 1)]}",
                {"level": level, "subproblem": p // (c - 1),
                 "classes": [order[level], order[level + 1 + p % (c - 1)]], **cert})
        levels.append(LevelRecord(level, c, S, L, D, delta, mu, retried,
                                  mind if trace else None))
        if keep_regular and level == 0:
            kept_r = tuple(out[i].astype(bool) for i in range(c - 1))
        # children: one per pivot cluster, classes 1..c-1 restricted to its R-neighbours
        cols = np.nonzero(out.reshape(-1, L))[1].reshape(S, c - 1, L, mu)
        sidx = np.arange(S)[:, None, None, None]
        iidx = np.arange(1, c)[None, :, None, None]
        child = roots[sidx, iidx, cols]                      # (S, c-1, L, mu)
        pivots.append(roots[:, 0, :].reshape(-1))
        roots = np.ascontiguousarray(child.transpose(0, 2, 1, 3).reshape(S * L, c - 1, mu))
        sizes.append(mu)

    # two classes left: randomised perfect matchings
    S, c, L = roots.shape
    lroots = np.ascontiguousarray(roots[:, 0, :])
    rroots = np.ascontiguousarray(roots[:, 1, :])
    partner = np.zeros((S, L), dtype=np.int32)
    mindeg = np.zeros(S, dtype=np.int32)
    retry_cap = int(calib("bipartite", "retry_cap"))
    ok = kern.batch_random_matching(adj, lroots, rroots, -1, mix_seeds(derive_u64(seed, "base-matching", 1), S),
                                    partner, mindeg).astype(bool)
    attempt = 1
    while not ok.all() and attempt < retry_cap:
        attempt += 1
        bad = np.flatnonzero(~ok)
        sub_partner = np.zeros((len(bad), L), dtype=np.int32)
        sub_min = np.zeros(len(bad), dtype=np.int32)
        seeds = mix_seeds(derive_u64(seed, "base-matching", attempt), S)[bad]
        sub_ok = kern.batch_random_matching(adj, np.ascontiguousarray(lroots[bad]),
                                            np.ascontiguousarray(rroots[bad]), -1,
                                            np.ascontiguousarray(seeds), sub_partner, sub_min).astype(bool)
        partner[bad[sub_ok]] = sub_partner[sub_ok]
        ok[bad[sub_ok]] = True
    if not ok.all():
        s = int(np.flatnonzero(~ok)[0])
        block = adj[np.ix_(lroots[s], rroots[s])]
        raise MatchingFailure(
            f"base-case matching failed after {attempt} attempts",
            {"subproblem": s, "attempts": attempt, "left": lroots[s].tolist(), "right": rroots[s].tolist(),
             "min_degree": int(mindeg[s]), "size": L,
             "edges": [[int(a), int(b)] for a, b in zip(*np.nonzero(block))]})
    Db = int(mindeg.min()) if S else 0
    levels.append(LevelRecord(q - 2, 2, S, L, Db, Fraction(Db, L) if L else Fraction(0), None,
                              attempt > 1, mindeg if trace else None))

    # bottom-up assembly; cliques of one subproblem stay contiguous
    cliques = np.empty((S * L, q), dtype=np.int32)
    cliques[:, q - 2] = lroots.reshape(-1)
    cliques[:, q - 1] = np.take_along_axis(rroots, partner, axis=1).reshape(-1)
    blocks = _subproblem_blocks(sizes)
    for level in range(q - 3, -1, -1):
        cliques[:, level] = np.repeat(pivots[level], blocks[level + 1])
    perm_cliques = cliques
    cliques = np.empty_like(perm_cliques)
    cliques[:, list(order)] = perm_cliques

    per_root = (S * L) // ell
    unit = C.weight / per_root
    mult = np.ones(S * L, dtype=np.int64)
    factor = CliqueFactor(q, cliques, unit, mult, order, tuple(blocks), tuple(sizes),
                          {"seed": int(seed), "levels": [lv.to_json() for lv in levels],
                           "delta0": frac_str(delta0), "backend": getattr(kern, "BACKEND_NAME", kern.__name__)})
    return FactorResult(RefinedClusterGraph(C, factor), factor, tuple(levels), delta0, kept_r)


def _subproblem_blocks(sizes: list[int]) -> list[int]:
    """``blocks[t]``: cliques produced by one level-``t`` subproblem, ``prod(sizes[t:])``.

    A pivot cluster at level ``t`` therefore lies in ``blocks[t + 1]``
    consecutive cliques.
    """
    return [math.prod(sizes[t:]) for t in range(len(sizes))] + [1]


# --------------------------------------------------------------------------
# verification

def clique_participation_count(F: CliqueFactor, U: int, n_clusters: int | None = None) -> int:
    n = int(F.cliques.max()) + 1 if n_clusters is None else n_clusters
    if not 0 <= U < max(n, 1) or (n_clusters is not None and U >= n_clusters):
        raise InvalidArgument(f"unknown cluster {U}")
    return int((F.cliques == U).any(axis=1).sum())


@dataclass(frozen=True)
class FactorCertificate:
    ok: bool
    n_cliques: int
    weight: Fraction | None
    participation: int | None
    digest: str
    violations: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"ok": self.ok, "n_cliques": self.n_cliques,
                "weight": frac_str(self.weight) if self.weight is not None else None,
                "participation": self.participation, "digest": self.digest,
                "violations": list(self.violations)}


def verify_factor(C0: ClusterGraph, F: CliqueFactor, max_listed: int = 50) -> FactorCertificate:
    """Independent recount of every factor invariant; violations are returned, not raised."""
    g = C0.graph
    viol: list[str] = []
    K, q = F.cliques.shape if F.cliques.ndim == 2 else (0, F.q)
    if q != g.q or F.q != g.q:
        viol.append(f"factor has {F.q} slots but the graph has {g.q} classes")
        return FactorCertificate(False, K, None, None, F.digest(), tuple(viol))
    cl = np.ascontiguousarray(F.cliques.T, dtype=np.int64)   # one contiguous row per slot
    digest = F.digest()
    if K and (cl.min() < 0 or cl.max() >= g.n_vertices):
        viol.append("clique references an unknown cluster")
        return FactorCertificate(False, K, None, None, digest, tuple(viol))
    n = g.n_vertices
    if n * n < 2 ** 31:
        cl = cl.astype(np.int32)
    # one class per slot
    class_of = g.class_of.astype(np.int32)
    for j in range(q):
        bad = np.flatnonzero(class_of[cl[j]] != j) if K else []
        for k in list(bad)[:max_listed]:
            viol.append(f"slot: clique {k} holds cluster {cl[j, k]} of class {class_of[cl[j, k]]} in slot {j}")
    # pairwise adjacency of parents
    flat_adj = g.adj.ravel()
    for i in range(q):
        for j in range(i + 1, q):
            if not K:
                continue
            bad = np.flatnonzero(~flat_adj[cl[i] * n + cl[j]])
            for k in bad[:max_listed]:
                viol.append(f"adjacency: clique {k} pairs non-adjacent clusters {cl[i, k]} and {cl[j, k]}")
            if len(bad) > max_listed:
                viol.append(f"adjacency: {len(bad) - max_listed} further non-adjacent pairs for slots ({i}, {j})")
    # exact weight conservation, weight sums kept as integer multiples of the unit
    sums = np.bincount(cl.ravel(), minlength=g.n_vertices)
    mult = np.asarray(F.weight_mult, dtype=np.int64)
    if K and (mult == 1).all():
        mult_sums = sums.astype(np.int64)
    elif K and int(mult.max()) * K * q < 2 ** 52:
        # float sums of integers stay exact below 2**53
        mult_sums = sum(np.bincount(cl[j], weights=mult, minlength=n) for j in range(q)).astype(np.int64)
    else:
        mult_sums = np.zeros(n, dtype=np.int64)
        for j in range(q):
            np.add.at(mult_sums, cl[j], mult)
    listed = 0
    for value in np.unique(mult_sums):
        total = int(value) * F.weight_unit
        for u in np.flatnonzero(mult_sums == value):
            if total != C0.weight_of(int(u)):
                if listed < max_listed:
                    viol.append(f"weight: cluster {u} carries {total} instead of {C0.weight_of(int(u))}")
                listed += 1
    if listed > max_listed:
        viol.append(f"weight: {listed - max_listed} further clusters with wrong totals")
    if not F.uniform:
        odd = np.flatnonzero(F.weight_mult != np.bincount(F.weight_mult).argmax())
        viol.append(f"uniformity: clique weights differ (e.g. clique {int(odd[0])} has {F.weight(int(odd[0]))})")
    counts = np.unique(sums)
    participation = int(counts[0]) if len(counts) == 1 else None
    weight = F.weight(0) if K and F.uniform else None
    return FactorCertificate(not viol, K, weight, participation, digest, tuple(viol))


def lemma_count(sizes: Sequence[int]) -> int:
    """Cliques expected to contain copies of each cluster: the product of the realized sizes after the first."""
    return math.prod(sizes[1:]) if len(sizes) > 1 else 1


def claim_bound_ok(levels: Sequence[LevelRecord]) -> list[tuple[int, float, float]]:
    """Per level: measured degree ratio and the bound derived from the parent level."""
    out = []
    for a, b in zip(levels, levels[1:]):
        bound = recursed_delta(a.delta) - 2.0 / a.size if a.delta >= HALF else float("nan")
        out.append((b.level, float(b.delta), bound))
    return out
