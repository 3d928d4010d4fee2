# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: bipartite matching, b-matching and batched per-subproblem drivers.

``_pykernels.py`` implements exactly the same algorithms in pure Python; both
must return identical results for identical inputs.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy
from libc.stdint cimport uint64_t, int32_t, uint8_t

cnp.import_array()

cdef int INF = 1 << 30


cdef inline uint64_t sm_next(uint64_t* state) noexcept nogil:
    state[0] += 0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


# --------------------------------------------------------------------------
# Hopcroft-Karp on a dense local biadjacency matrix

cdef struct HK:
    const uint8_t* m
    int nl
    int nr
    int* ml
    int* mr
    int* dist
    int* queue


cdef bint hk_bfs(HK* h) noexcept nogil:
    cdef int head = 0, tail = 0, a, b, a2
    cdef bint found = False
    for a in range(h.nl):
        if h.ml[a] < 0:
            h.dist[a] = 0
            h.queue[tail] = a
            tail += 1
        else:
            h.dist[a] = INF
    while head < tail:
        a = h.queue[head]
        head += 1
        for b in range(h.nr):
            if h.m[a * h.nr + b]:
                a2 = h.mr[b]
                if a2 < 0:
                    found = True
                elif h.dist[a2] == INF:
                    h.dist[a2] = h.dist[a] + 1
                    h.queue[tail] = a2
                    tail += 1
    return found


cdef bint hk_dfs(HK* h, int a) noexcept nogil:
    cdef int b, a2
    for b in range(h.nr):
        if h.m[a * h.nr + b]:
            a2 = h.mr[b]
            if a2 < 0 or (h.dist[a2] == h.dist[a] + 1 and hk_dfs(h, a2)):
                h.ml[a] = b
                h.mr[b] = a
                return True
    h.dist[a] = INF
    return False


cdef int hk_run(const uint8_t* m, int nl, int nr, int* ml, int* mr, int* dist, int* queue) noexcept nogil:
    """Extend the partial matching ``ml``/``mr`` to a maximum one; returns its size."""
    cdef HK h
    cdef int a, b, size = 0
    h.m = m
    h.nl = nl
    h.nr = nr
    h.ml = ml
    h.mr = mr
    h.dist = dist
    h.queue = queue
    # greedy start, lowest free neighbour first
    for a in range(nl):
        if ml[a] < 0:
            for b in range(nr):
                if m[a * nr + b] and mr[b] < 0:
                    ml[a] = b
                    mr[b] = a
                    break
    while hk_bfs(&h):
        for a in range(nl):
            if ml[a] < 0:
                hk_dfs(&h, a)
    for a in range(nl):
        if ml[a] >= 0:
            size += 1
    return size


# --------------------------------------------------------------------------
# degree-constrained subgraph (b-matching) by augmenting paths

cdef long bm_run(const uint8_t* m, int nl, int nr, const int* capl, const int* capr,
                 uint8_t* sel, int* degl, int* degr, int* parl, int* parr,
                 uint8_t* seenl, int* queue) noexcept nogil:
    cdef int a, b, t, b0, a2, head, tail, end
    cdef long total = 0
    memset(sel, 0, nl * nr)
    memset(degl, 0, nl * sizeof(int))
    memset(degr, 0, nr * sizeof(int))
    # cyclic greedy start spreads the load over the right side
    for a in range(nl):
        b0 = (a * nr) // nl
        for t in range(nr):
            if degl[a] >= capl[a]:
                break
            b = (b0 + t) % nr
            if m[a * nr + b] and degr[b] < capr[b]:
                sel[a * nr + b] = 1
                degl[a] += 1
                degr[b] += 1
                total += 1
    while True:
        head = 0
        tail = 0
        for a in range(nl):
            seenl[a] = 0
            parl[a] = -1
        for b in range(nr):
            parr[b] = -2
        for a in range(nl):
            if degl[a] < capl[a]:
                seenl[a] = 1
                queue[tail] = a
                tail += 1
        end = -1
        while head < tail and end < 0:
            a = queue[head]
            head += 1
            for b in range(nr):
                if m[a * nr + b] and not sel[a * nr + b] and parr[b] == -2:
                    parr[b] = a
                    if degr[b] < capr[b]:
                        end = b
                        break
                    for a2 in range(nl):
                        if sel[a2 * nr + b] and not seenl[a2]:
                            seenl[a2] = 1
                            parl[a2] = b
                            queue[tail] = a2
                            tail += 1
        if end < 0:
            break
        b = end
        degr[b] += 1
        while True:
            a = parr[b]
            sel[a * nr + b] = 1
            if parl[a] < 0:
                degl[a] += 1
                break
            b = parl[a]
            sel[a * nr + b] = 0
        total += 1
    return total


# --------------------------------------------------------------------------
# randomised perfect matching: random phase on both sides, then residual HK

cdef int rm_run(const uint8_t* m, int n, int k, uint64_t seed, int* ml, int* mr,
                uint8_t* chosen_l, uint8_t* chosen_r, int* order, int* fl, int* fr,
                uint8_t* sub, int* sml, int* smr, int* dist, int* queue) noexcept nogil:
    """Returns the final matching size; ``n`` means perfect."""
    cdef uint64_t state = seed
    cdef int t, j, a, b, cnt, p, tmp, nv, nfl, nfr, x, y, size
    for a in range(n):
        ml[a] = -1
        mr[a] = -1
        chosen_l[a] = 0
        chosen_r[a] = 0
        order[a] = a
    if k > n:
        k = n
    for t in range(k):
        j = t + <int>(sm_next(&state) % <uint64_t>(n - t))
        tmp = order[t]; order[t] = order[j]; order[j] = tmp
        a = order[t]
        cnt = 0
        for b in range(n):
            if m[a * n + b] and mr[b] < 0:
                cnt += 1
        if cnt == 0:
            continue
        p = <int>(sm_next(&state) % <uint64_t>cnt)
        for b in range(n):
            if m[a * n + b] and mr[b] < 0:
                if p == 0:
                    ml[a] = b
                    mr[b] = a
                    chosen_l[a] = 1
                    break
                p -= 1
    nv = 0
    for b in range(n):
        if mr[b] < 0:
            order[nv] = b
            nv += 1
    if k > nv:
        k = nv
    for t in range(k):
        j = t + <int>(sm_next(&state) % <uint64_t>(nv - t))
        tmp = order[t]; order[t] = order[j]; order[j] = tmp
        b = order[t]
        cnt = 0
        for a in range(n):
            if m[a * n + b] and ml[a] < 0:
                cnt += 1
        if cnt == 0:
            continue
        p = <int>(sm_next(&state) % <uint64_t>cnt)
        for a in range(n):
            if m[a * n + b] and ml[a] < 0:
                if p == 0:
                    ml[a] = b
                    mr[b] = a
                    chosen_r[b] = 1
                    break
                p -= 1
    nfl = 0
    nfr = 0
    for a in range(n):
        if ml[a] < 0:
            fl[nfl] = a
            nfl += 1
    for b in range(n):
        if mr[b] < 0:
            fr[nfr] = b
            nfr += 1
    for x in range(nfl):
        sml[x] = -1
        for y in range(nfr):
            sub[x * nfr + y] = m[fl[x] * n + fr[y]]
    for y in range(nfr):
        smr[y] = -1
    hk_run(sub, nfl, nfr, sml, smr, dist, queue)
    for x in range(nfl):
        if sml[x] >= 0:
            ml[fl[x]] = fr[sml[x]]
            mr[fr[sml[x]]] = fl[x]
    size = 0
    for a in range(n):
        if ml[a] >= 0:
            size += 1
    return size


# --------------------------------------------------------------------------
# Python entry points

def hopcroft_karp(const uint8_t[:, ::1] m, int[::1] ml, int[::1] mr):
    cdef int nl = m.shape[0], nr = m.shape[1], size
    cdef int* dist = <int*>malloc((nl + 1) * sizeof(int))
    cdef int* queue = <int*>malloc((nl + 1) * sizeof(int))
    try:
        with nogil:
            size = hk_run(&m[0, 0] if nl * nr > 0 else NULL, nl, nr,
                          &ml[0] if nl > 0 else NULL, &mr[0] if nr > 0 else NULL, dist, queue)
    finally:
        free(dist)
        free(queue)
    return size


def bmatch(const uint8_t[:, ::1] m, int[::1] capl, int[::1] capr, uint8_t[:, ::1] sel):
    cdef int nl = m.shape[0], nr = m.shape[1]
    cdef long total
    if nl == 0 or nr == 0:
        return 0
    cdef int* degl = <int*>malloc(nl * sizeof(int))
    cdef int* degr = <int*>malloc(nr * sizeof(int))
    cdef int* parl = <int*>malloc(nl * sizeof(int))
    cdef int* parr = <int*>malloc(nr * sizeof(int))
    cdef uint8_t* seenl = <uint8_t*>malloc(nl)
    cdef int* queue = <int*>malloc((nl + 1) * sizeof(int))
    try:
        with nogil:
            total = bm_run(&m[0, 0], nl, nr, &capl[0], &capr[0], &sel[0, 0],
                           degl, degr, parl, parr, seenl, queue)
    finally:
        free(degl); free(degr); free(parl); free(parr); free(seenl); free(queue)
    return total


def random_matching(const uint8_t[:, ::1] m, int k, uint64_t seed, int[::1] ml, int[::1] mr,
                    uint8_t[::1] chosen_l, uint8_t[::1] chosen_r):
    cdef int n = m.shape[0], size
    if n == 0:
        return 0
    cdef int* order = <int*>malloc(n * sizeof(int))
    cdef int* fl = <int*>malloc(n * sizeof(int))
    cdef int* fr = <int*>malloc(n * sizeof(int))
    cdef uint8_t* sub = <uint8_t*>malloc(n * n)
    cdef int* sml = <int*>malloc(n * sizeof(int))
    cdef int* smr = <int*>malloc(n * sizeof(int))
    cdef int* dist = <int*>malloc((n + 1) * sizeof(int))
    cdef int* queue = <int*>malloc((n + 1) * sizeof(int))
    try:
        with nogil:
            size = rm_run(&m[0, 0], n, k, seed, &ml[0], &mr[0], &chosen_l[0], &chosen_r[0],
                          order, fl, fr, sub, sml, smr, dist, queue)
    finally:
        free(order); free(fl); free(fr); free(sub); free(sml); free(smr); free(dist); free(queue)
    return size


def min_cross_degree(const uint8_t[:, ::1] adj, const int32_t[:, :, ::1] roots):
    """For each subproblem ``s``: min over classes i != j and clusters t of deg(roots[s,i,t], class j)."""
    cdef Py_ssize_t S = roots.shape[0], c = roots.shape[1], L = roots.shape[2], N = adj.shape[0]
    cdef Py_ssize_t s, i, j, t, u
    cdef int cnt, best
    cdef const uint8_t* row
    out = np.empty(S, dtype=np.int32)
    cdef int32_t[::1] o = out
    with nogil:
        for s in range(S):
            best = INF
            for i in range(c):
                for t in range(L):
                    row = &adj[roots[s, i, t], 0]
                    for j in range(c):
                        if j == i:
                            continue
                        cnt = 0
                        for u in range(L):
                            cnt += row[roots[s, j, u]]
                        if cnt < best:
                            best = cnt
            o[s] = best
    return out


def batch_regular(const uint8_t[:, ::1] adj, const int32_t[:, ::1] lroots,
                  const int32_t[:, ::1] rroots, int r, uint8_t[:, :, ::1] out):
    """r-regular spanning subgraph of every pair ``(lroots[p], rroots[p])``; returns ok flags."""
    cdef Py_ssize_t P = lroots.shape[0], p, a, b
    cdef int L = lroots.shape[1]
    cdef long total
    ok = np.zeros(P, dtype=np.uint8)
    cdef uint8_t[::1] okv = ok
    if P == 0 or L == 0:
        return ok
    cdef uint8_t* m = <uint8_t*>malloc(L * L)
    cdef int* cap = <int*>malloc(L * sizeof(int))
    cdef int* degl = <int*>malloc(L * sizeof(int))
    cdef int* degr = <int*>malloc(L * sizeof(int))
    cdef int* parl = <int*>malloc(L * sizeof(int))
    cdef int* parr = <int*>malloc(L * sizeof(int))
    cdef uint8_t* seenl = <uint8_t*>malloc(L)
    cdef int* queue = <int*>malloc((L + 1) * sizeof(int))
    cdef const uint8_t* row
    try:
        with nogil:
            for a in range(L):
                cap[a] = r
            for p in range(P):
                for a in range(L):
                    row = &adj[lroots[p, a], 0]
                    for b in range(L):
                        m[a * L + b] = row[rroots[p, b]]
                total = bm_run(m, L, L, cap, cap, &out[p, 0, 0], degl, degr, parl, parr, seenl, queue)
                okv[p] = 1 if total == <long>L * r else 0
    finally:
        free(m); free(cap); free(degl); free(degr); free(parl); free(parr); free(seenl); free(queue)
    return ok


def batch_random_matching(const uint8_t[:, ::1] adj, const int32_t[:, ::1] lroots,
                          const int32_t[:, ::1] rroots, int k, const uint64_t[::1] seeds,
                          int32_t[:, ::1] out, int32_t[::1] mindeg):
    """Randomised perfect matching of every pair; ``out[s, a]`` is the partner of left ``a``.

    ``mindeg[s]`` receives the minimum degree of pair ``s``. A negative ``k``
    sets the random phase to ``max(0, floor((2 mindeg - n) / 4))`` per pair,
    i.e. ``floor(psi n / 2)`` with ``psi = mindeg / n - 1/2``.
    """
    cdef Py_ssize_t S = lroots.shape[0], s, a, b
    cdef int n = lroots.shape[1], size, dmin, cnt, ks
    ok = np.zeros(S, dtype=np.uint8)
    cdef uint8_t[::1] okv = ok
    if S == 0 or n == 0:
        return ok
    cdef uint8_t* m = <uint8_t*>malloc(n * n)
    cdef int* ml = <int*>malloc(n * sizeof(int))
    cdef int* mr = <int*>malloc(n * sizeof(int))
    cdef uint8_t* cl = <uint8_t*>malloc(n)
    cdef uint8_t* cr = <uint8_t*>malloc(n)
    cdef int* order = <int*>malloc(n * sizeof(int))
    cdef int* fl = <int*>malloc(n * sizeof(int))
    cdef int* fr = <int*>malloc(n * sizeof(int))
    cdef uint8_t* sub = <uint8_t*>malloc(n * n)
    cdef int* sml = <int*>malloc(n * sizeof(int))
    cdef int* smr = <int*>malloc(n * sizeof(int))
    cdef int* dist = <int*>malloc((n + 1) * sizeof(int))
    cdef int* queue = <int*>malloc((n + 1) * sizeof(int))
    cdef const uint8_t* row
    try:
        with nogil:
            for s in range(S):
                for a in range(n):
                    row = &adj[lroots[s, a], 0]
                    for b in range(n):
                        m[a * n + b] = row[rroots[s, b]]
                dmin = n
                for a in range(n):
                    cnt = 0
                    for b in range(n):
                        cnt += m[a * n + b]
                    if cnt < dmin:
                        dmin = cnt
                for b in range(n):
                    cnt = 0
                    for a in range(n):
                        cnt += m[a * n + b]
                    if cnt < dmin:
                        dmin = cnt
                mindeg[s] = dmin
                ks = k
                if ks < 0:
                    ks = (2 * dmin - n) // 4 if 2 * dmin > n else 0
                size = rm_run(m, n, ks, seeds[s], ml, mr, cl, cr, order, fl, fr, sub, sml, smr, dist, queue)
                okv[s] = 1 if size == n else 0
                for a in range(n):
                    out[s, a] = ml[a]
    finally:
        free(m); free(ml); free(mr); free(cl); free(cr); free(order); free(fl); free(fr)
        free(sub); free(sml); free(smr); free(dist); free(queue)
    return ok
