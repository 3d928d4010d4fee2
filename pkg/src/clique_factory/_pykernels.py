"""Pure-Python twin of ``_ckernels``.

Same algorithms, same iteration order and same random stream, so both
backends return identical results. Used when the extension is unavailable or
``CLIQUE_FACTORY_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import sys

import numpy as np

INF = 1 << 30
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class _SplitMix:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def _rows(m) -> list[list[int]]:
    """Adjacency lists (ascending) of a dense 0/1 matrix given as nested lists."""
    return [[b for b, x in enumerate(row) if x] for row in m]


def _hk_run(rows, nl, nr, ml, mr) -> int:
    for a in range(nl):
        if ml[a] < 0:
            for b in rows[a]:
                if mr[b] < 0:
                    ml[a] = b
                    mr[b] = a
                    break
    dist = [0] * nl

    def bfs() -> bool:
        queue = []
        for a in range(nl):
            if ml[a] < 0:
                dist[a] = 0
                queue.append(a)
            else:
                dist[a] = INF
        found = False
        head = 0
        while head < len(queue):
            a = queue[head]
            head += 1
            for b in rows[a]:
                a2 = mr[b]
                if a2 < 0:
                    found = True
                elif dist[a2] == INF:
                    dist[a2] = dist[a] + 1
                    queue.append(a2)
        return found

    def dfs(a) -> bool:
        for b in rows[a]:
            a2 = mr[b]
            if a2 < 0 or (dist[a2] == dist[a] + 1 and dfs(a2)):
                ml[a] = b
                mr[b] = a
                return True
        dist[a] = INF
        return False

    while bfs():
        for a in range(nl):
            if ml[a] < 0:
                dfs(a)
    return sum(1 for a in range(nl) if ml[a] >= 0)


def _bm_run(m, nl, nr, capl, capr, sel) -> int:
    degl = [0] * nl
    degr = [0] * nr
    total = 0
    for a in range(nl):
        sel[a] = [0] * nr
    for a in range(nl):
        b0 = (a * nr) // nl
        row = m[a]
        for t in range(nr):
            if degl[a] >= capl[a]:
                break
            b = (b0 + t) % nr
            if row[b] and degr[b] < capr[b]:
                sel[a][b] = 1
                degl[a] += 1
                degr[b] += 1
                total += 1
    while True:
        seenl = [0] * nl
        parl = [-1] * nl
        parr = [-2] * nr
        queue = [a for a in range(nl) if degl[a] < capl[a]]
        for a in queue:
            seenl[a] = 1
        end = -1
        head = 0
        while head < len(queue) and end < 0:
            a = queue[head]
            head += 1
            row, srow = m[a], sel[a]
            for b in range(nr):
                if row[b] and not srow[b] and parr[b] == -2:
                    parr[b] = a
                    if degr[b] < capr[b]:
                        end = b
                        break
                    for a2 in range(nl):
                        if sel[a2][b] and not seenl[a2]:
                            seenl[a2] = 1
                            parl[a2] = b
                            queue.append(a2)
        if end < 0:
            break
        b = end
        degr[b] += 1
        while True:
            a = parr[b]
            sel[a][b] = 1
            if parl[a] < 0:
                degl[a] += 1
                break
            b = parl[a]
            sel[a][b] = 0
        total += 1
    return total


def _rm_run(m, n, k, seed, ml, mr, chosen_l, chosen_r) -> int:
    rng = _SplitMix(seed)
    for a in range(n):
        ml[a] = mr[a] = -1
        chosen_l[a] = chosen_r[a] = 0
    order = list(range(n))
    k = min(k, n)
    for t in range(k):
        j = t + rng.next() % (n - t)
        order[t], order[j] = order[j], order[t]
        a = order[t]
        row = m[a]
        vacant = [b for b in range(n) if row[b] and mr[b] < 0]
        if not vacant:
            continue
        b = vacant[rng.next() % len(vacant)]
        ml[a], mr[b] = b, a
        chosen_l[a] = 1
    order = [b for b in range(n) if mr[b] < 0]
    nv = len(order)
    k = min(k, nv)
    for t in range(k):
        j = t + rng.next() % (nv - t)
        order[t], order[j] = order[j], order[t]
        b = order[t]
        vacant = [a for a in range(n) if m[a][b] and ml[a] < 0]
        if not vacant:
            continue
        a = vacant[rng.next() % len(vacant)]
        ml[a], mr[b] = b, a
        chosen_r[b] = 1
    fl = [a for a in range(n) if ml[a] < 0]
    fr = [b for b in range(n) if mr[b] < 0]
    sub_rows = [[y for y, b in enumerate(fr) if m[a][b]] for a in fl]
    sml = [-1] * len(fl)
    smr = [-1] * len(fr)
    _hk_run(sub_rows, len(fl), len(fr), sml, smr)
    for x, y in enumerate(sml):
        if y >= 0:
            ml[fl[x]] = fr[y]
            mr[fr[y]] = fl[x]
    return sum(1 for a in range(n) if ml[a] >= 0)


def _recursion_guard(n: int) -> None:
    need = 2 * n + 1000
    if sys.getrecursionlimit() < need:
        sys.setrecursionlimit(need)


# --------------------------------------------------------------------------
# public entry points, same signatures as the compiled module

def hopcroft_karp(m, ml, mr) -> int:
    m = np.asarray(m)
    nl, nr = m.shape
    _recursion_guard(nl)
    lm, lr = [int(x) for x in ml], [int(x) for x in mr]
    size = _hk_run(_rows(m.tolist()), nl, nr, lm, lr)
    ml[:] = lm
    mr[:] = lr
    return size


def bmatch(m, capl, capr, sel) -> int:
    m = np.asarray(m)
    nl, nr = m.shape
    if nl == 0 or nr == 0:
        return 0
    s = [None] * nl
    total = _bm_run(m.tolist(), nl, nr, [int(x) for x in capl], [int(x) for x in capr], s)
    sel[:, :] = np.asarray(s, dtype=np.uint8)
    return total


def random_matching(m, k, seed, ml, mr, chosen_l, chosen_r) -> int:
    m = np.asarray(m)
    n = m.shape[0]
    if n == 0:
        return 0
    _recursion_guard(n)
    lm, lr, cl, cr = [0] * n, [0] * n, [0] * n, [0] * n
    size = _rm_run(m.tolist(), n, int(k), int(seed), lm, lr, cl, cr)
    ml[:] = lm
    mr[:] = lr
    chosen_l[:] = cl
    chosen_r[:] = cr
    return size


def min_cross_degree(adj, roots) -> np.ndarray:
    adj = np.asarray(adj)
    roots = np.asarray(roots)
    S, c, L = roots.shape
    out = np.empty(S, dtype=np.int32)
    for s in range(S):
        best = INF
        for i in range(c):
            for t in range(L):
                row = adj[roots[s, i, t]]
                for j in range(c):
                    if j == i:
                        continue
                    cnt = int(sum(int(row[u]) for u in roots[s, j]))
                    best = min(best, cnt)
        out[s] = best
    return out


def batch_regular(adj, lroots, rroots, r, out) -> np.ndarray:
    adj = np.asarray(adj)
    P, L = lroots.shape
    ok = np.zeros(P, dtype=np.uint8)
    if P == 0 or L == 0:
        return ok
    cap = [int(r)] * L
    for p in range(P):
        m = adj[np.ix_(lroots[p], rroots[p])].tolist()
        s = [None] * L
        total = _bm_run(m, L, L, cap, cap, s)
        out[p] = np.asarray(s, dtype=np.uint8)
        ok[p] = 1 if total == L * r else 0
    return ok


def batch_random_matching(adj, lroots, rroots, k, seeds, out, mindeg) -> np.ndarray:
    adj = np.asarray(adj)
    S, n = lroots.shape
    ok = np.zeros(S, dtype=np.uint8)
    if S == 0 or n == 0:
        return ok
    _recursion_guard(n)
    for s in range(S):
        block = adj[np.ix_(lroots[s], rroots[s])]
        m = block.tolist()
        dmin = int(min(block.sum(axis=1).min(), block.sum(axis=0).min(), n))
        mindeg[s] = dmin
        ks = int(k)
        if ks < 0:
            ks = (2 * dmin - n) // 4 if 2 * dmin > n else 0
        ml, mr, cl, cr = [0] * n, [0] * n, [0] * n, [0] * n
        size = _rm_run(m, n, ks, int(seeds[s]), ml, mr, cl, cr)
        ok[s] = 1 if size == n else 0
        out[s] = ml
    return ok
