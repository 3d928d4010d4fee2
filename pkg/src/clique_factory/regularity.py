"""Empirical regularity estimation and the stability operations on bipartite pairs.

Deciding epsilon-regularity exactly is intractable, so
:func:`irregularity_witness_search` is a falsifier: the ``epsilon_hat`` it
reports is the largest density deviation it actually found, always backed by a
stored witness, hence a lower bound on the true irregularity. Exact decisions
are available only for tiny sides through :func:`exact_irregularity`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .calibration import get as calib
from .errors import DegeneratePair, InvalidArgument, TooLarge
from .rng import derive, derive_u64
from .thresholds import as_fraction


@dataclass(frozen=True, eq=False)
class BipartitePair:
    """A bipartite graph between sides ``A`` (rows) and ``B`` (columns)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=bool)
        if m.ndim != 2:
            raise InvalidArgument("pair matrix must be two-dimensional")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other) -> bool:
        return isinstance(other, BipartitePair) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash((self.matrix.shape, self.matrix.tobytes()))

    @property
    def a(self) -> int:
        return self.matrix.shape[0]

    @property
    def b(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_edges(self) -> int:
        return int(self.matrix.sum())

    @property
    def density(self) -> Fraction:
        if self.a == 0 or self.b == 0:
            return Fraction(0)
        return Fraction(self.n_edges, self.a * self.b)

    def sub(self, rows, cols) -> "BipartitePair":
        return BipartitePair(self.matrix[np.ix_(np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))])

    def subset_density(self, xs, ys) -> Fraction:
        xs, ys = list(xs), list(ys)
        if not xs or not ys:
            raise InvalidArgument("subset density needs nonempty sets")
        return Fraction(int(self.matrix[np.ix_(xs, ys)].sum()), len(xs) * len(ys))

    def min_degree_proportion(self) -> float:
        """``min(min_a deg(a)/|B|, min_b deg(b)/|A|)``."""
        if self.a == 0 or self.b == 0:
            return 0.0
        return float(min(self.matrix.sum(axis=1).min() / self.b, self.matrix.sum(axis=0).min() / self.a))

    def to_json(self) -> dict:
        r, c = np.nonzero(self.matrix)
        return {"a": self.a, "b": self.b, "edges": [[int(x), int(y)] for x, y in zip(r, c)]}

    @classmethod
    def from_json(cls, data: dict) -> "BipartitePair":
        a, b = int(data["a"]), int(data["b"])
        m = np.zeros((a, b), dtype=bool)
        for x, y in data["edges"]:
            if not (0 <= x < a and 0 <= y < b):
                raise InvalidArgument(f"edge ({x}, {y}) outside a {a}x{b} pair")
            m[x, y] = True
        return cls(m)

    @classmethod
    def random(cls, a: int, b: int, d: float, seed: int) -> "BipartitePair":
        return cls(derive(seed, "random-pair", a, b).random((a, b)) < d)


@dataclass(frozen=True)
class RegularityReport:
    density: Fraction
    epsilon_hat: float
    deviation: Fraction          # exact |d(X, Y) - d(A, B)| of the witness
    witness: tuple[tuple[int, ...], tuple[int, ...]]
    samples: int
    eps: float
    probe_sizes: tuple[tuple[int, ...], tuple[int, ...]]
    source: str = "sample"

    def verify(self, pair: BipartitePair) -> bool:
        xs, ys = self.witness
        dev = abs(pair.subset_density(xs, ys) - pair.density)
        return (dev == self.deviation and float(dev) == self.epsilon_hat
                and len(xs) > self.eps * pair.a and len(ys) > self.eps * pair.b)

    def to_json(self) -> dict:
        return {"density": str(self.density), "density_float": float(self.density),
                "epsilon_hat": self.epsilon_hat, "deviation": str(self.deviation),
                "witness": {"x": list(self.witness[0]), "y": list(self.witness[1])},
                "samples": self.samples, "eps": self.eps, "source": self.source,
                "probe_sizes": {"x": list(self.probe_sizes[0]), "y": list(self.probe_sizes[1])}}


def probe_sizes(side: int, eps: float) -> tuple[int, ...]:
    """Qualifying subset sizes: minimal, about ``2 eps`` of the side, and half."""
    raw = (math.ceil(eps * side) + 1, math.ceil(2 * eps * side), math.ceil(side / 2))
    return tuple(sorted({min(s, side) for s in raw if min(s, side) > eps * side and s >= 1}))


def _indicators(idx_lists, n):
    out = np.zeros((len(idx_lists), n))
    for t, idx in enumerate(idx_lists):
        out[t, list(idx)] = 1.0
    return out


def _candidate_sets(pair: BipartitePair, eps: float, sx, sy, seed: int):
    """Deterministic adversarial candidates plus neighbourhood probes."""
    m = pair.matrix
    a, b = pair.a, pair.b
    full_a, full_b = tuple(range(a)), tuple(range(b))
    cands = [(full_a, full_b, "full")]
    row_order = np.argsort(m.sum(axis=1), kind="stable")
    col_order = np.argsort(m.sum(axis=0), kind="stable")
    for k in sx:
        cands.append((tuple(sorted(row_order[:k].tolist())), full_b, "low-degree rows"))
        cands.append((tuple(sorted(row_order[a - k:].tolist())), full_b, "high-degree rows"))
    for k in sy:
        cands.append((full_a, tuple(sorted(col_order[:k].tolist())), "low-degree columns"))
        cands.append((full_a, tuple(sorted(col_order[b - k:].tolist())), "high-degree columns"))
    rng = derive(seed, "witness-neighbourhood")
    probes = int(calib("regularity", "neighbourhood_probes"))
    xs = rng.integers(0, a, size=probes)
    ys = rng.integers(0, b, size=probes)
    for x, y in zip(xs, ys):
        ny = np.flatnonzero(m[:, y])          # subset of A
        nx = np.flatnonzero(m[x])             # subset of B
        ay = np.setdiff1d(np.arange(a), ny)
        bx = np.setdiff1d(np.arange(b), nx)
        for X in (ny, ay):
            for Y in (nx, bx, np.arange(b)):
                if len(X) > eps * a and len(Y) > eps * b:
                    cands.append((tuple(X.tolist()), tuple(Y.tolist()), "neighbourhood"))
    return cands


def irregularity_witness_search(pair: BipartitePair, eps: float, samples: int | None = None,
                                seed: int = 0) -> RegularityReport:
    """Largest density deviation found over qualifying subset pairs.

    Random subset pairs are drawn at the probe sizes of :func:`probe_sizes`
    (round robin over all size combinations) from a stream whose first ``T``
    draws do not depend on the total, so more samples never lower the result.
    Degree-sorted prefixes and neighbourhood sets are always examined too.
    """
    if not 0 < eps < 1:
        raise InvalidArgument(f"eps must lie in (0, 1), got {eps}")
    if pair.a == 0 or pair.b == 0:
        raise InvalidArgument("both sides must be nonempty")
    if samples is None:
        samples = int(calib("regularity", "samples"))
    m = pair.matrix.astype(np.float64)
    a, b = pair.a, pair.b
    d = pair.density
    dval = float(d)
    sx, sy = probe_sizes(a, eps), probe_sizes(b, eps)

    best_dev, best_xy, best_src = Fraction(0), (tuple(range(a)), tuple(range(b))), "full"

    def consider(xs, ys, src):
        nonlocal best_dev, best_xy, best_src
        dev = abs(pair.subset_density(xs, ys) - d)
        if dev > best_dev:
            best_dev, best_xy, best_src = dev, (tuple(xs), tuple(ys)), src

    cands = _candidate_sets(pair, eps, sx, sy, seed)
    if cands:
        ix = _indicators([c[0] for c in cands], a)
        iy = _indicators([c[1] for c in cands], b)
        dens = ((ix @ m) * iy).sum(axis=1) / (ix.sum(axis=1) * iy.sum(axis=1))
        for t in np.argsort(-np.abs(dens - dval), kind="stable")[:4]:
            consider(cands[t][0], cands[t][1], cands[t][2])

    if samples > 0 and sx and sy:
        combos = [(kx, ky) for kx in sx for ky in sy]
        rng = derive(seed, "witness-samples")
        chunk = 512
        for start in range(0, samples, chunk):
            stop = min(samples, start + chunk)
            u = rng.random((stop - start, a + b))
            kx = np.array([combos[t % len(combos)][0] for t in range(start, stop)])
            ky = np.array([combos[t % len(combos)][1] for t in range(start, stop)])
            rank_x = np.argsort(np.argsort(u[:, :a], axis=1, kind="stable"), axis=1, kind="stable")
            rank_y = np.argsort(np.argsort(u[:, a:], axis=1, kind="stable"), axis=1, kind="stable")
            ix = (rank_x < kx[:, None]).astype(np.float64)
            iy = (rank_y < ky[:, None]).astype(np.float64)
            dens = ((ix @ m) * iy).sum(axis=1) / (kx * ky)
            dev = np.abs(dens - dval)
            top = np.argsort(-dev, kind="stable")[:2]
            for t in top:
                consider(np.flatnonzero(ix[t]).tolist(), np.flatnonzero(iy[t]).tolist(), "sample")
    return RegularityReport(d, float(best_dev), best_dev, best_xy, int(samples), float(eps), (sx, sy), best_src)


def exact_irregularity(pair: BipartitePair, eps: float, max_side: int = 12) -> RegularityReport:
    """Exact maximum deviation over all ``|X| > eps|A|``, ``|Y| > eps|B|``.

    Enumerates every ``X``; for fixed ``X`` and ``|Y|`` the extreme densities
    come from the columns with most and fewest neighbours in ``X``.
    """
    a, b = pair.a, pair.b
    if min(a, b) == 0:
        raise InvalidArgument("both sides must be nonempty")
    if a > max_side:
        raise TooLarge(f"exact regularity check enumerates 2^{a} subsets; cap is 2^{max_side}")
    m = pair.matrix.astype(np.int64)
    d = pair.density
    min_x = math.floor(eps * a) + 1
    min_y = math.floor(eps * b) + 1
    best = (Fraction(-1), None)
    for kx in range(min_x, a + 1):
        for xs in combinations(range(a), kx):
            counts = m[list(xs)].sum(axis=0)
            order = np.argsort(counts, kind="stable")
            asc = np.cumsum(counts[order])
            desc = np.cumsum(counts[order[::-1]])
            for ky in range(min_y, b + 1):
                for total, cols in ((int(desc[ky - 1]), order[::-1][:ky]), (int(asc[ky - 1]), order[:ky])):
                    dev = abs(Fraction(total, kx * ky) - d)
                    if dev > best[0]:
                        best = (dev, (tuple(xs), tuple(sorted(int(c) for c in cols))))
    dev, witness = best
    return RegularityReport(d, float(dev), dev, witness, 0, float(eps),
                            (tuple(range(min_x, a + 1)), tuple(range(min_y, b + 1))), "exact")


# --------------------------------------------------------------------------
# super-regular trimming

@dataclass(frozen=True)
class SuperRegularPair:
    pair: BipartitePair
    kept_a: tuple[int, ...]
    kept_b: tuple[int, ...]
    removed_a: tuple[int, ...]
    removed_b: tuple[int, ...]
    eps: float                 # claimed regularity parameter, 3 * input eps
    delta: float               # claimed degree floor, d - 3 * input eps
    first_pass: tuple[int, int]
    bound: tuple[int, int]     # ceil(2 eps |A|), ceil(2 eps |B|)

    @property
    def within_bound(self) -> bool:
        return len(self.removed_a) <= self.bound[0] and len(self.removed_b) <= self.bound[1]

    def check_degrees(self) -> bool:
        m = self.pair.matrix
        return bool((m.sum(axis=1) > self.delta * self.pair.b).all()
                    and (m.sum(axis=0) > self.delta * self.pair.a).all())

    def discard_fractions(self, a: int, b: int) -> tuple[float, float]:
        return len(self.removed_a) / a, len(self.removed_b) / b


def trim_to_super_regular(pair: BipartitePair, eps: float, d=None) -> SuperRegularPair:
    """Discard vertices whose degree strays from ``d`` by more than ``eps``.

    One marking pass on both sides against the original pair, then a fixed
    point that enforces the floor ``deg > (d - 3 eps)`` times the partner
    size inside the kept pair. ``d`` defaults to the pair density.
    """
    if pair.a == 0 or pair.b == 0:
        raise DegeneratePair("cannot trim a pair with an empty side", {"a": pair.a, "b": pair.b})
    d = pair.density if d is None else as_fraction(d)
    e = as_fraction(eps)
    m = pair.matrix
    a, b = pair.a, pair.b
    deg_a = m.sum(axis=1)
    deg_b = m.sum(axis=0)
    # integer comparisons against exact rational bounds
    keep_a = np.array([not (x < (d - e) * b or x > (d + e) * b) for x in deg_a.tolist()], dtype=bool)
    keep_b = np.array([not (x < (d - e) * a or x > (d + e) * a) for x in deg_b.tolist()], dtype=bool)
    first = (int((~keep_a).sum()), int((~keep_b).sum()))
    floor = d - 3 * e
    while True:
        if not keep_a.any() or not keep_b.any():
            raise DegeneratePair("trimming emptied a side",
                                 {"a": a, "b": b, "eps": float(eps), "d": str(d)})
        sub = m[np.ix_(keep_a, keep_b)]
        ka, kb = sub.shape
        ra = sub.sum(axis=1)
        rb = sub.sum(axis=0)
        bad_a = np.array([not (x > floor * kb) for x in ra.tolist()], dtype=bool)
        bad_b = np.array([not (x > floor * ka) for x in rb.tolist()], dtype=bool)
        if not bad_a.any() and not bad_b.any():
            break
        keep_a[np.flatnonzero(keep_a)[bad_a]] = False
        keep_b[np.flatnonzero(keep_b)[bad_b]] = False
    kept_a = tuple(np.flatnonzero(keep_a).tolist())
    kept_b = tuple(np.flatnonzero(keep_b).tolist())
    return SuperRegularPair(pair.sub(kept_a, kept_b), kept_a, kept_b,
                            tuple(np.flatnonzero(~keep_a).tolist()),
                            tuple(np.flatnonzero(~keep_b).tolist()),
                            3 * float(eps), float(floor),
                            first, (math.ceil(2 * eps * a), math.ceil(2 * eps * b)))


# --------------------------------------------------------------------------
# random splits, halving and growth

@dataclass(frozen=True)
class SplitResult:
    parts_a: tuple[tuple[int, ...], ...]
    parts_b: tuple[tuple[int, ...], ...]
    pairs: tuple[tuple[BipartitePair, ...], ...]
    reports: tuple[tuple[RegularityReport, ...], ...]
    max_epsilon_hat: float
    min_degree_proportion: float
    min_density: float


def _equipartition(n: int, k: int, rng: np.random.Generator) -> tuple[tuple[int, ...], ...]:
    perm = rng.permutation(n)
    size = n // k
    return tuple(tuple(sorted(perm[i * size:(i + 1) * size].tolist())) for i in range(k))


def random_split(pair: BipartitePair, k: int, seed: int, eps: float | None = None,
                 samples: int | None = None) -> SplitResult:
    """Uniform random equipartition of both sides into ``k`` parts; every subpair is probed at ``2 eps``."""
    if k < 1 or pair.a % k or pair.b % k:
        raise InvalidArgument(f"k={k} must divide both side sizes ({pair.a}, {pair.b})")
    if eps is None:
        eps = float(calib("regularity", "split_eps"))
    rng = derive(seed, "random-split")
    pa = _equipartition(pair.a, k, rng)
    pb = _equipartition(pair.b, k, rng)
    pairs, reports = [], []
    probe = min(2 * eps, 0.99)
    for i in range(k):
        row_p, row_r = [], []
        for j in range(k):
            sub = pair.sub(pa[i], pb[j])
            row_p.append(sub)
            row_r.append(irregularity_witness_search(sub, probe, samples, seed=derive_u64(seed, "split-probe", i, j)))
        pairs.append(tuple(row_p))
        reports.append(tuple(row_r))
    flat_p = [p for row in pairs for p in row]
    flat_r = [r for row in reports for r in row]
    return SplitResult(pa, pb, tuple(pairs), tuple(reports),
                       max(r.epsilon_hat for r in flat_r),
                       min(p.min_degree_proportion() for p in flat_p),
                       min(float(p.density) for p in flat_p))


@dataclass(frozen=True)
class HalveResult:
    first: BipartitePair
    second: BipartitePair
    rows: tuple[tuple[int, ...], tuple[int, ...]]
    cols: tuple[tuple[int, ...], tuple[int, ...]]
    reports: tuple[RegularityReport | None, RegularityReport | None]


def halve(pair: BipartitePair, seed: int, eps: float | None = None,
          samples: int | None = None) -> HalveResult:
    """Random halving into ``(A', B')`` and ``(A'', B'')``, each probed at ``2 eps``."""
    if pair.a % 2 or pair.b % 2:
        raise InvalidArgument(f"halving needs even side sizes, got ({pair.a}, {pair.b})")
    if eps is None:
        eps = float(calib("regularity", "probe_eps"))
    rng = derive(seed, "halve")
    ra = _equipartition(pair.a, 2, rng)
    rb = _equipartition(pair.b, 2, rng)
    first = pair.sub(ra[0], rb[0])
    second = pair.sub(ra[1], rb[1])
    probe = min(2 * eps, 0.99)
    reports = tuple(irregularity_witness_search(p, probe, samples, seed=derive_u64(seed, "halve-probe", t))
                    if p.a and p.b else None for t, p in enumerate((first, second)))
    return HalveResult(first, second, ra, rb, reports)


@dataclass(frozen=True)
class GrowResult:
    pair: BipartitePair
    added: tuple[int, int]
    report: RegularityReport
    within_budget: bool
    budget: float


def within_budget(count: int, m: int, eps: float, K: float | None = None) -> bool:
    if K is None:
        K = float(calib("regularity", "grow_budget_K"))
    return count <= K * eps * m + 1e-9


def grow(pair: BipartitePair, new_rows, new_cols, eps: float, seed: int = 0,
         samples: int | None = None, K: float | None = None) -> GrowResult:
    """Append vertices to both sides.

    ``new_rows`` has shape ``(ca, b + cb)`` (new ``A`` vertices against the
    whole grown ``B``); ``new_cols`` has shape ``(a, cb)`` (old ``A`` against new
    ``B`` vertices). The grown pair is probed at the same ``eps`` as the input.
    """
    a, b = pair.a, pair.b
    new_rows = np.asarray(new_rows, dtype=bool)
    new_cols = np.asarray(new_cols, dtype=bool)
    ca = new_rows.shape[0] if new_rows.size or new_rows.ndim == 2 else 0
    cb = new_cols.shape[1] if new_cols.ndim == 2 else 0
    if ca and new_rows.shape[1] != b + cb:
        raise InvalidArgument(f"new_rows must have {b + cb} columns")
    if cb and new_cols.shape[0] != a:
        raise InvalidArgument(f"new_cols must have {a} rows")
    top = np.hstack([pair.matrix, new_cols.reshape(a, cb)])
    full = np.vstack([top, new_rows.reshape(ca, b + cb)]) if ca else top
    grown = BipartitePair(full)
    if K is None:
        K = float(calib("regularity", "grow_budget_K"))
    budget = K * eps * min(a, b)
    report = irregularity_witness_search(grown, eps, samples, seed)
    return GrowResult(grown, (ca, cb), report, max(ca, cb) <= budget + 1e-9, budget)


def random_growth(pair: BipartitePair, count: int, seed: int, mode: str = "random",
                  p: float | None = None):
    """Blocks for :func:`grow`: ``count`` new vertices per side.

    ``mode`` is ``random`` (edges with probability ``p``, default the pair
    density), ``empty`` or ``full``.
    """
    a, b = pair.a, pair.b
    rng = derive(seed, "grow", mode)
    p = float(pair.density) if p is None else p
    if mode == "random":
        rows = rng.random((count, b + count)) < p
        cols = rng.random((a, count)) < p
    elif mode == "empty":
        rows = np.zeros((count, b + count), dtype=bool)
        cols = np.zeros((a, count), dtype=bool)
    elif mode == "full":
        rows = np.ones((count, b + count), dtype=bool)
        cols = np.ones((a, count), dtype=bool)
    else:
        raise InvalidArgument(f"unknown growth mode {mode!r}")
    return rows, cols
