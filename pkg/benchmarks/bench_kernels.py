"""Compiled kernels against the pure-Python twin.

Each kernel is run on the same seeded inputs under both backends; outputs
must agree exactly before any timing is reported.

    python3 benchmarks/bench_kernels.py --sizes 20 60 120 --repeat 3
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from clique_factory import kernels


def dense_pair(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    m = (rng.random((n, n)) < p).astype(np.uint8)
    # a planted permutation keeps every instance perfectly matchable
    m[np.arange(n), rng.permutation(n)] = 1
    return np.ascontiguousarray(m)


def case_hopcroft_karp(kern, m):
    n = m.shape[0]
    ml = np.full(n, -1, dtype=np.int32)
    mr = np.full(n, -1, dtype=np.int32)
    size = kern.hopcroft_karp(m, ml, mr)
    return size, ml.tolist()


def case_bmatch(kern, m):
    n = m.shape[0]
    cap = np.full(n, max(1, n // 4), dtype=np.int32)
    sel = np.zeros_like(m)
    total = kern.bmatch(m, cap, cap.copy(), sel)
    return total, sel.tobytes()


def case_random_matching(kern, m):
    n = m.shape[0]
    ml = np.full(n, -1, dtype=np.int32)
    mr = np.full(n, -1, dtype=np.int32)
    cl = np.zeros(n, dtype=np.uint8)
    cr = np.zeros(n, dtype=np.uint8)
    size = kern.random_matching(m, n // 8, 12345, ml, mr, cl, cr)
    return size, ml.tolist(), cl.tolist()


def _blocks(n: int, rng: np.random.Generator, L: int = 8):
    P = max(1, n // L)
    adj = dense_pair(P * L * 2, 0.7, rng)
    adj = np.ascontiguousarray(np.maximum(adj, adj.T))
    idx = rng.permutation(P * L * 2).astype(np.int32)
    lroots = np.ascontiguousarray(idx[: P * L].reshape(P, L))
    rroots = np.ascontiguousarray(idx[P * L:].reshape(P, L))
    return adj, lroots, rroots


def case_batch_regular(kern, blocks):
    adj, lroots, rroots = blocks
    P, L = lroots.shape
    out = np.zeros((P, L, L), dtype=np.uint8)
    ok = kern.batch_regular(adj, lroots, rroots, 3, out)
    return np.asarray(ok).tolist(), out.tobytes()


def case_batch_random_matching(kern, blocks):
    adj, lroots, rroots = blocks
    P, L = lroots.shape
    seeds = np.arange(1, P + 1, dtype=np.uint64)
    out = np.zeros((P, L), dtype=np.int32)
    mindeg = np.zeros(P, dtype=np.int32)
    ok = kern.batch_random_matching(adj, lroots, rroots, -1, seeds, out, mindeg)
    return np.asarray(ok).tolist(), out.tolist(), mindeg.tolist()


def case_min_cross_degree(kern, blocks):
    adj, lroots, rroots = blocks
    roots = np.ascontiguousarray(np.stack([lroots, rroots], axis=1))
    return np.asarray(kern.min_cross_degree(adj, roots)).tolist()


CASES = {
    "hopcroft_karp": ("pair", case_hopcroft_karp),
    "bmatch": ("pair", case_bmatch),
    "random_matching": ("pair", case_random_matching),
    "batch_regular": ("blocks", case_batch_regular),
    "batch_random_matching": ("blocks", case_batch_random_matching),
    "min_cross_degree": ("blocks", case_min_cross_degree),
}


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(sizes, repeat: int, seed: int) -> list[dict]:
    compiled = kernels.get_backend("compiled")
    python = kernels.get_backend("python")
    rows = []
    for n in sizes:
        rng = np.random.default_rng([seed, n])
        pair = dense_pair(n, 0.5, rng)
        blocks = _blocks(n, rng)
        for name, (kind, case) in CASES.items():
            arg = pair if kind == "pair" else blocks
            a = case(compiled, arg)
            b = case(python, arg)
            if a != b:
                raise AssertionError(f"{name} at n={n}: backends disagree")
            tc = best_of(lambda: case(compiled, arg), repeat)
            tp = best_of(lambda: case(python, arg), repeat)
            rows.append({"kernel": name, "n": n, "compiled_s": tc, "python_s": tp,
                         "speedup": tp / tc if tc > 0 else float("inf")})
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 60, 120])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print rows as JSON")
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rows = run(args.sizes, args.repeat, args.seed)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"{'kernel':<24}{'n':>6}{'compiled ms':>14}{'python ms':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<24}{r['n']:>6}{r['compiled_s'] * 1e3:>14.3f}"
              f"{r['python_s'] * 1e3:>12.3f}{r['speedup']:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
