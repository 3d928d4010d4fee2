"""Brute-force ground truth for desk-sized instances.

Nothing here calls the solvers it is meant to check: matchings are decided by
a subset dynamic programme, regular subgraphs by a row-by-row search over
column-degree vectors, and clique factors by plain backtracking.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument, TooLarge
from .graph import MultipartiteGraph
from .thresholds import floor_rho_times

MAX_FACTOR_VERTICES = 30
MAX_EXHAUSTIVE_N = 5
DEFAULT_NODE_CAP = 5_000_000


@dataclass
class OracleResult:
    feasible: bool
    witness: object = None
    nodes_explored: int = 0

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"feasible": self.feasible, "witness": w, "nodes_explored": self.nodes_explored}


# --------------------------------------------------------------------------
# clique factors

def exact_clique_factor(G: MultipartiteGraph, q: int | None = None,
                        node_cap: int = DEFAULT_NODE_CAP) -> OracleResult:
    """Decide whether ``G`` splits into vertex-disjoint q-cliques, one vertex per class.

    Always extends the clique of the lowest uncovered vertex of the first
    class and prunes as soon as an uncovered vertex has no uncovered
    neighbour left in some other class.
    """
    q = G.q if q is None else q
    if q != G.q:
        raise InvalidArgument(f"graph has {G.q} classes, q={q} requested")
    if G.n_vertices > MAX_FACTOR_VERTICES:
        raise TooLarge(f"{G.n_vertices} vertices exceed the oracle cap of {MAX_FACTOR_VERTICES}")
    if not G.balanced:
        return OracleResult(False, None, 0)
    nbr = [0] * G.n_vertices
    for u, v in zip(*np.nonzero(G.adj)):
        nbr[int(u)] |= 1 << int(v)
    class_mask = [sum(1 << v for v in cls) for cls in G.classes]
    classes = [list(c) for c in G.classes]
    nodes = 0
    chosen: list[tuple[int, ...]] = []

    def dead(free: int) -> bool:
        for j, cls in enumerate(classes):
            for v in cls:
                if free >> v & 1:
                    for i in range(q):
                        if i != j and not (nbr[v] & free & class_mask[i]):
                            return True
        return False

    def extend(partial: list[int], common: int, free: int) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > node_cap:
            raise TooLarge(f"clique-factor search exceeded {node_cap} nodes")
        t = len(partial)
        if t == q:
            rest = free
            for v in partial:
                rest &= ~(1 << v)
            chosen.append(tuple(partial))
            if solve(rest):
                return True
            chosen.pop()
            return False
        for v in classes[t]:
            if common >> v & 1:
                if extend(partial + [v], common & nbr[v], free):
                    return True
        return False

    def solve(free: int) -> bool:
        if free == 0:
            return True
        if dead(free):
            return False
        first = next(v for v in classes[0] if free >> v & 1)
        return extend([first], nbr[first] & free, free)

    full = sum(1 << v for v in range(G.n_vertices))
    ok = solve(full)
    witness = np.array(chosen, dtype=np.int64).reshape(-1, q) if ok else None
    return OracleResult(ok, witness, nodes)


# --------------------------------------------------------------------------
# single bipartite graphs

def _rows_as_masks(m: np.ndarray) -> list[int]:
    return [sum(1 << int(b) for b in np.flatnonzero(row)) for row in m]


def exact_perfect_matching(pair) -> OracleResult:
    """Subset dynamic programme over the right vertices used by the first rows."""
    m = np.asarray(pair, dtype=bool)
    n, nr = m.shape
    if n != nr:
        return OracleResult(False, None, 0)
    rows = _rows_as_masks(m)
    # parent[mask] = (previous mask, column) for masks reachable with popcount(mask) rows matched
    parent = {0: None}
    layer = [0]
    nodes = 0
    for a in range(n):
        nxt = []
        for mask in layer:
            free = rows[a] & ~mask
            while free:
                low = free & -free
                free ^= low
                new = mask | low
                nodes += 1
                if new not in parent:
                    parent[new] = (mask, low.bit_length() - 1)
                    nxt.append(new)
        layer = nxt
    full = (1 << n) - 1
    if n and full not in parent:
        return OracleResult(False, None, nodes)
    partner = [-1] * n
    mask, a = full, n - 1
    while mask and a >= 0:
        prev, b = parent[mask]
        partner[a] = b
        mask, a = prev, a - 1
    return OracleResult(True, partner, nodes)


def exact_regular_subgraph(pair, r: int) -> OracleResult:
    """Search for a spanning subgraph with every degree exactly ``r``.

    Rows are processed in order; each picks ``r`` of its neighbours, and the
    state is the vector of column degrees so far, memoised on failure.
    """
    m = np.asarray(pair, dtype=bool)
    nl, nr = m.shape
    if r < 0:
        raise InvalidArgument("r must be nonnegative")
    if r == 0:
        return OracleResult(True, np.zeros_like(m), 1)
    if nl * r != nr * r:
        return OracleResult(False, None, 0)
    options = [[c for c in itertools.combinations(np.flatnonzero(row).tolist(), r)] for row in m]
    nodes = 0
    choice: list[tuple[int, ...]] = []

    @lru_cache(maxsize=None)
    def fails(a: int, cols: tuple[int, ...]) -> bool:
        nonlocal nodes
        nodes += 1
        if a == nl:
            return not all(c == r for c in cols)
        # no column can still need more edges than there are rows left
        if max(r - c for c in cols) > nl - a:
            return True
        for opt in options[a]:
            if all(cols[b] < r for b in opt):
                new = list(cols)
                for b in opt:
                    new[b] += 1
                choice.append(opt)
                if not fails(a + 1, tuple(new)):
                    return False
                choice.pop()
        return True

    ok = not fails(0, (0,) * nr)
    if not ok:
        return OracleResult(False, None, nodes)
    sub = np.zeros_like(m)
    for a, opt in enumerate(choice):
        sub[a, list(opt)] = True
    return OracleResult(True, sub, nodes)


# --------------------------------------------------------------------------
# exhaustive sweeps

def _check_n(n: int) -> None:
    if n < 1:
        raise InvalidArgument("n must be positive")
    if n > MAX_EXHAUSTIVE_N:
        raise TooLarge(f"exhaustive enumeration is capped at n={MAX_EXHAUSTIVE_N}")


def enumerate_bipartite(n: int, min_degree: int = 0, canonical: bool | None = None):
    """Yield every ``n x n`` 0/1 matrix whose row and column sums are at least ``min_degree``.

    With ``canonical`` (default for ``n = 5``) only matrices with
    non-decreasing row codes are produced, one per row-permutation class.
    """
    _check_n(n)
    if canonical is None:
        canonical = n >= 5
    codes = [c for c in range(1 << n) if bin(c).count("1") >= min_degree]
    bits = np.array([[(c >> b) & 1 for b in range(n)] for c in range(1 << n)], dtype=bool)
    gen = (itertools.combinations_with_replacement(codes, n) if canonical
           else itertools.product(codes, repeat=n))
    for rows in gen:
        m = bits[list(rows)]
        if n and m.sum(axis=0).min() < min_degree:
            continue
        yield m


def min_degree(m: np.ndarray) -> int:
    if m.size == 0:
        return 0
    return int(min(m.sum(axis=1).min(), m.sum(axis=0).min()))


@dataclass
class MatchingThresholdReport:
    n: int
    degree_bound: int
    graphs: int
    all_matchable: bool
    failures: list = field(default_factory=list)
    counterexample: list | None = None
    canonical: bool = False

    def to_json(self) -> dict:
        return {"n": self.n, "degree_bound": self.degree_bound, "graphs": self.graphs,
                "all_matchable": self.all_matchable, "failures": self.failures[:10],
                "counterexample": self.counterexample, "canonical": self.canonical}


def exhaustive_matching_threshold(n: int, canonical: bool | None = None) -> MatchingThresholdReport:
    """Every graph with minimum degree at least ``ceil(n/2)`` has a perfect matching; one with
    minimum degree ``ceil(n/2) - 1`` may not."""
    _check_n(n)
    canonical = n >= 5 if canonical is None else canonical
    bound = math.ceil(n / 2)
    graphs = 0
    failures = []
    for m in enumerate_bipartite(n, bound, canonical):
        graphs += 1
        if not exact_perfect_matching(m).feasible:
            failures.append(m.astype(int).tolist())
    counter = None
    for m in enumerate_bipartite(n, bound - 1, canonical):
        if min_degree(m) == bound - 1 and not exact_perfect_matching(m).feasible:
            counter = m.astype(int).tolist()
            break
    return MatchingThresholdReport(n, bound, graphs, not failures, failures, counter, canonical)


@dataclass
class RegularFeasibilityReport:
    n: int
    graphs: int
    all_feasible: bool
    by_degree: dict                     # min degree -> (regular degree, graphs checked)
    failures: list = field(default_factory=list)
    canonical: bool = False

    def to_json(self) -> dict:
        return {"n": self.n, "graphs": self.graphs, "all_feasible": self.all_feasible,
                "by_degree": {str(k): list(v) for k, v in self.by_degree.items()},
                "failures": self.failures[:10], "canonical": self.canonical}


def regular_degree_for(n: int, delta: int) -> int:
    """``floor(rho(delta / n) n)``."""
    return floor_rho_times(Fraction(delta, n), n)


def exhaustive_regular_feasibility(n: int, canonical: bool | None = None) -> RegularFeasibilityReport:
    """For every graph with minimum degree ``delta >= n/2``, an ``floor(rho(delta/n) n)``-regular
    spanning subgraph exists."""
    _check_n(n)
    canonical = n >= 5 if canonical is None else canonical
    by_degree: dict[int, list[int]] = {}
    failures = []
    graphs = 0
    for m in enumerate_bipartite(n, math.ceil(n / 2), canonical):
        delta = min_degree(m)
        r = regular_degree_for(n, delta)
        graphs += 1
        entry = by_degree.setdefault(delta, [r, 0])
        entry[1] += 1
        if not exact_regular_subgraph(m, r).feasible:
            failures.append({"matrix": m.astype(int).tolist(), "delta": delta, "r": r})
    return RegularFeasibilityReport(n, graphs, not failures,
                                    {k: tuple(v) for k, v in sorted(by_degree.items())}, failures, canonical)
