"""Perfect matchings with Hall certificates, randomised matchings and regular spanning subgraphs.

Every function accepts either a :class:`BipartiteView` or a 0/1 biadjacency
matrix (rows = left side). Results use local indices: row ``a`` of the matrix
and column ``b``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import kernels
from .calibration import get as calib
from .errors import (DomainError, InvalidArgument, InvalidInstance, InvariantViolation,
                     MatchingFailure, RegularSubgraphInfeasible)
from .graph import BipartiteView
from .rng import derive_u64
from .thresholds import floor_rho_times

PairLike = Union[BipartiteView, np.ndarray, list]


def as_matrix(pair: PairLike) -> np.ndarray:
    if isinstance(pair, BipartiteView):
        m = pair.matrix
    else:
        m = np.asarray(pair)
        if m.ndim != 2:
            raise InvalidArgument("biadjacency matrix must be two-dimensional")
    return np.ascontiguousarray(m, dtype=np.uint8)


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    n_left: int
    n_right: int

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def perfect(self) -> bool:
        return self.n_left == self.n_right == len(self.pairs)

    def partner_array(self) -> np.ndarray:
        out = np.full(self.n_left, -1, dtype=np.int64)
        for a, b in self.pairs:
            out[a] = b
        return out

    def verify(self, pair: PairLike) -> list[str]:
        m = as_matrix(pair)
        problems = []
        lefts = [a for a, _ in self.pairs]
        rights = [b for _, b in self.pairs]
        if len(set(lefts)) != len(lefts) or len(set(rights)) != len(rights):
            problems.append("matching edges are not disjoint")
        for a, b in self.pairs:
            if not m[a, b]:
                problems.append(f"({a}, {b}) is not an edge")
        return problems

    @classmethod
    def from_partners(cls, ml, n_right: int) -> "Matching":
        pairs = tuple((int(a), int(b)) for a, b in enumerate(ml) if b >= 0)
        return cls(pairs, len(ml), n_right)


@dataclass(frozen=True)
class HallViolator:
    """A set ``S`` of left vertices whose neighbourhood is smaller than ``S``."""

    subset: tuple[int, ...]
    neighbourhood: tuple[int, ...]

    @property
    def perfect(self) -> bool:
        return False

    def verify(self, pair: PairLike) -> bool:
        m = as_matrix(pair)
        if not self.subset:
            return False
        nbrs = np.flatnonzero(m[list(self.subset)].any(axis=0))
        return set(nbrs.tolist()) == set(self.neighbourhood) and len(nbrs) < len(self.subset)

    def to_dict(self) -> dict:
        return {"subset": list(self.subset), "neighbourhood": list(self.neighbourhood)}


@dataclass(frozen=True)
class RegularSubgraph:
    matrix: np.ndarray
    degree: int

    def recount(self) -> tuple[np.ndarray, np.ndarray]:
        return self.matrix.sum(axis=1), self.matrix.sum(axis=0)

    def is_regular(self) -> bool:
        rows, cols = self.recount()
        return bool((rows == self.degree).all() and (cols == self.degree).all())

    def edges(self) -> list[tuple[int, int]]:
        r, c = np.nonzero(self.matrix)
        return [(int(a), int(b)) for a, b in zip(r, c)]


@dataclass(frozen=True)
class FlowCut:
    """Minimum cut of the degree-constrained flow network, witnessing infeasibility.

    The source side holds ``left_reachable`` and ``right_reachable``; its
    capacity equals the maximum flow and is below ``required``.
    """

    left_reachable: tuple[int, ...]
    right_reachable: tuple[int, ...]
    capacity: int
    required: int

    def to_dict(self) -> dict:
        return {"left_reachable": list(self.left_reachable),
                "right_reachable": list(self.right_reachable),
                "cut_capacity": self.capacity, "required": self.required}


@dataclass(frozen=True)
class RandomizedMatching:
    matching: Matching
    random_left: tuple[int, ...]
    random_right: tuple[int, ...]
    attempts: int


# --------------------------------------------------------------------------
# perfect matchings

def maximum_matching(pair: PairLike) -> Matching:
    m = as_matrix(pair)
    nl, nr = m.shape
    ml = np.full(nl, -1, dtype=np.int32)
    mr = np.full(nr, -1, dtype=np.int32)
    kernels.hopcroft_karp(m, ml, mr)
    return Matching.from_partners(ml, nr)


def hall_violator(m: np.ndarray, ml: np.ndarray, mr: np.ndarray) -> HallViolator:
    """Alternating reachability from the free left vertices of a maximum matching."""
    nl = m.shape[0]
    seen_l = np.zeros(nl, dtype=bool)
    seen_r = np.zeros(m.shape[1], dtype=bool)
    queue = deque(int(a) for a in np.flatnonzero(ml < 0))
    seen_l[list(queue)] = True
    while queue:
        a = queue.popleft()
        for b in np.flatnonzero(m[a]):
            if not seen_r[b]:
                seen_r[b] = True
                a2 = int(mr[b])
                if a2 >= 0 and not seen_l[a2]:
                    seen_l[a2] = True
                    queue.append(a2)
    return HallViolator(tuple(np.flatnonzero(seen_l).tolist()), tuple(np.flatnonzero(seen_r).tolist()))


def perfect_matching(pair: PairLike) -> Matching | HallViolator:
    """A perfect matching, or a Hall violator proving none exists."""
    m = as_matrix(pair)
    nl, nr = m.shape
    if nl != nr:
        raise InvalidInstance(f"unbalanced sides: {nl} left vs {nr} right")
    ml = np.full(nl, -1, dtype=np.int32)
    mr = np.full(nr, -1, dtype=np.int32)
    size = kernels.hopcroft_karp(m, ml, mr)
    if size == nl:
        return Matching.from_partners(ml, nr)
    return hall_violator(m, ml, mr)


def randomized_matching(pair: PairLike, psi: float, seed: int,
                        retry_cap: int | None = None) -> RandomizedMatching:
    """Perfect matching whose first ``floor(psi n / 2)`` choices per side are random.

    Left vertices are processed first, then right vertices among those still
    vacant; the rest is completed on the residual graph. A failed completion
    is retried with fresh randomness, and after ``retry_cap`` attempts the
    last residual graph is reported.
    """
    m = as_matrix(pair)
    n, nr = m.shape
    if n != nr:
        raise InvalidInstance(f"unbalanced sides: {n} left vs {nr} right")
    if psi < 0:
        raise DomainError("psi must be nonnegative")
    if retry_cap is None:
        retry_cap = int(calib("bipartite", "retry_cap"))
    k = int(np.floor(psi * n / 2 + 1e-12))
    ml = np.zeros(n, dtype=np.int32)
    mr = np.zeros(n, dtype=np.int32)
    cl = np.zeros(n, dtype=np.uint8)
    cr = np.zeros(n, dtype=np.uint8)
    for attempt in range(1, retry_cap + 1):
        s = derive_u64(seed, "randomized-matching", attempt)
        size = kernels.random_matching(m, k, s, ml, mr, cl, cr)
        if size == n:
            return RandomizedMatching(Matching.from_partners(ml, n),
                                      tuple(np.flatnonzero(cl).tolist()),
                                      tuple(np.flatnonzero(cr).tolist()), attempt)
        if k == 0:
            break  # no randomness to vary
    # random pairs survive the residual completion untouched
    taken_l = cl.astype(bool)
    taken_r = cr.astype(bool)
    taken_r[ml[taken_l]] = True
    taken_l[mr[cr.astype(bool)]] = True
    free_l = np.flatnonzero(~taken_l)
    free_r = np.flatnonzero(~taken_r)
    raise MatchingFailure(
        f"residual completion failed after {attempt} attempts",
        {"n": n, "k": k, "attempts": attempt, "residual_left": free_l.tolist(),
         "residual_right": free_r.tolist(),
         "residual_edges": [[int(free_l[a]), int(free_r[b])]
                            for a, b in zip(*np.nonzero(m[np.ix_(free_l, free_r)]))]})


# --------------------------------------------------------------------------
# regular spanning subgraphs

def max_regular_degree(pair: PairLike) -> int:
    """``floor(rho(delta / n) n)`` where ``delta`` is the minimum degree of the pair."""
    m = as_matrix(pair)
    n, nr = m.shape
    if n != nr:
        raise InvalidInstance(f"unbalanced sides: {n} left vs {nr} right")
    if n == 0:
        raise InvalidInstance("empty pair")
    dmin = int(min(m.sum(axis=1).min(), m.sum(axis=0).min()))
    ratio = Fraction(dmin, n)
    if ratio < Fraction(1, 2):
        raise DomainError(f"minimum degree {dmin} is below n/2 = {n}/2")
    return floor_rho_times(ratio, n)


def _flow_cut(m: np.ndarray, sel: np.ndarray, capl: np.ndarray, capr: np.ndarray) -> FlowCut:
    nl, nr = m.shape
    degl = sel.sum(axis=1)
    seen_l = degl < capl
    seen_r = np.zeros(nr, dtype=bool)
    queue = deque(np.flatnonzero(seen_l).tolist())
    while queue:
        a = queue.popleft()
        for b in np.flatnonzero((m[a] != 0) & (sel[a] == 0) & ~seen_r):
            seen_r[b] = True
            for a2 in np.flatnonzero((sel[:, b] != 0) & ~seen_l):
                seen_l[a2] = True
                queue.append(int(a2))
    crossing = int((m != 0)[np.ix_(seen_l, ~seen_r)].sum())
    cap = int(capl[~seen_l].sum() + capr[seen_r].sum()) + crossing
    return FlowCut(tuple(np.flatnonzero(seen_l).tolist()), tuple(np.flatnonzero(seen_r).tolist()),
                   cap, int(capl.sum()))


def degree_constrained_subgraph(pair: PairLike, capl, capr) -> tuple[np.ndarray, int]:
    """Maximum subgraph with ``deg(a) <= capl[a]`` and ``deg(b) <= capr[b]``."""
    m = as_matrix(pair)
    capl = np.ascontiguousarray(capl, dtype=np.int32)
    capr = np.ascontiguousarray(capr, dtype=np.int32)
    sel = np.zeros(m.shape, dtype=np.uint8)
    total = kernels.bmatch(m, capl, capr, sel)
    return sel, int(total)


def extract_regular(pair: PairLike, r: int) -> RegularSubgraph:
    """An ``r``-regular spanning subgraph, or a certified infeasibility."""
    m = as_matrix(pair)
    n, nr = m.shape
    if n != nr:
        raise InvalidInstance(f"unbalanced sides: {n} left vs {nr} right")
    if r < 1:
        raise InvalidArgument(f"regular degree must be >= 1, got {r}")
    cap = np.full(n, r, dtype=np.int32)
    sel, total = degree_constrained_subgraph(m, cap, cap)
    if total != n * r:
        cut = _flow_cut(m, sel, cap, cap)
        raise RegularSubgraphInfeasible(
            f"no {r}-regular spanning subgraph (maximum flow {total} < {n * r})",
            {"r": r, "n": n, "max_flow": total, **cut.to_dict()})
    sub = RegularSubgraph(sel.astype(bool), r)
    if not sub.is_regular():
        raise InvariantViolation("degree-constrained subgraph failed its recount")
    return sub


def peel_one_factor(sub: RegularSubgraph) -> tuple[Matching, RegularSubgraph]:
    """Remove a perfect matching from an ``r``-regular bipartite graph (``r >= 1``)."""
    if sub.degree < 1:
        raise InvalidArgument("nothing to peel from a 0-regular graph")
    found = perfect_matching(sub.matrix)
    if not isinstance(found, Matching):
        raise InvariantViolation("regular bipartite graph without a perfect matching")
    rest = sub.matrix.copy()
    for a, b in found.pairs:
        rest[a, b] = False
    out = RegularSubgraph(rest, sub.degree - 1)
    if not out.is_regular():
        raise InvariantViolation("peeling broke regularity")
    return found, out


def peel_to(sub: RegularSubgraph, r: int) -> RegularSubgraph:
    if not 0 <= r <= sub.degree:
        raise InvalidArgument(f"cannot peel a {sub.degree}-regular graph down to {r}")
    while sub.degree > r:
        _, sub = peel_one_factor(sub)
    return sub
