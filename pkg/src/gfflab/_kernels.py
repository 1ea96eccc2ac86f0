"""Compiled helpers for the hot per-sample loops.

Everything here works on integer lattice coordinates so that cluster
diameters and nesting decisions are exact (squared distances and cross
products stay in int64).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_BRUTE_LIMIT = 48


@njit(cache=True)
def _max_d2_brute(ij, lo, hi):
    best = np.int64(0)
    for a in range(lo, hi):
        ia = ij[a, 0]
        ja = ij[a, 1]
        for b in range(a + 1, hi):
            di = ij[b, 0] - ia
            dj = ij[b, 1] - ja
            d2 = di * di + dj * dj
            if d2 > best:
                best = d2
    return best


@njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True)
def _max_d2_hull(ij, lo, hi, work):
    # Andrew's monotone chain; the points arrive sorted lexicographically
    # because cluster members are listed in interior-index order.
    n = hi - lo
    k = 0
    for t in range(lo, hi):
        x = ij[t, 0]
        y = ij[t, 1]
        while k >= 2 and _cross(work[k - 2, 0], work[k - 2, 1],
                                work[k - 1, 0], work[k - 1, 1], x, y) <= 0:
            k -= 1
        work[k, 0] = x
        work[k, 1] = y
        k += 1
    lower = k
    for t in range(hi - 2, lo - 1, -1):
        x = ij[t, 0]
        y = ij[t, 1]
        while k > lower and _cross(work[k - 2, 0], work[k - 2, 1],
                                   work[k - 1, 0], work[k - 1, 1], x, y) <= 0:
            k -= 1
        work[k, 0] = x
        work[k, 1] = y
        k += 1
    m = k - 1  # last point repeats the first
    if m < 2:
        return _max_d2_brute(ij, lo, hi)
    best = np.int64(0)
    for a in range(m):
        for b in range(a + 1, m):
            di = work[b, 0] - work[a, 0]
            dj = work[b, 1] - work[a, 1]
            d2 = di * di + dj * dj
            if d2 > best:
                best = d2
    return best


@njit(cache=True)
def cluster_diameters_sq(indptr, members_ij):
    """Exact squared lattice diameter per cluster.

    ``members_ij``: (total, 2) lattice coordinates grouped by cluster, each
    group sorted lexicographically; ``indptr`` delimits the groups.
    """
    ncl = len(indptr) - 1
    out = np.zeros(ncl, dtype=np.int64)
    maxlen = 0
    for c in range(ncl):
        ln = indptr[c + 1] - indptr[c]
        if ln > maxlen:
            maxlen = ln
    work = np.empty((2 * maxlen + 1, 2), dtype=np.int64)
    for c in range(ncl):
        lo = indptr[c]
        hi = indptr[c + 1]
        n = hi - lo
        if n <= 1:
            out[c] = 0
        elif n <= _BRUTE_LIMIT:
            out[c] = _max_d2_brute(members_ij, lo, hi)
        else:
            out[c] = _max_d2_hull(members_ij, lo, hi, work)
    return out


@njit(cache=True)
def articulation_dfs(indptr, indices, root):
    """Iterative DFS returning (disc, low, parent, order, sub_end).

    ``order`` lists nodes by discovery time and ``sub_end[u]`` is the
    exclusive end of u's subtree inside ``order``.  The graph must be
    connected and free of parallel edges.
    """
    n = len(indptr) - 1
    disc = np.full(n, -1, dtype=np.int64)
    low = np.empty(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    sub_end = np.empty(n, dtype=np.int64)
    cursor = indptr[:-1].copy()
    stack = np.empty(n, dtype=np.int64)
    top = 0
    stack[0] = root
    disc[root] = 0
    low[root] = 0
    order[0] = root
    t = 1
    while top >= 0:
        u = stack[top]
        if cursor[u] < indptr[u + 1]:
            v = indices[cursor[u]]
            cursor[u] += 1
            if disc[v] < 0:
                disc[v] = t
                low[v] = t
                order[t] = v
                t += 1
                parent[v] = u
                top += 1
                stack[top] = v
            elif v != parent[u] and disc[v] < low[u]:
                low[u] = disc[v]
        else:
            sub_end[u] = t
            top -= 1
            if top >= 0:
                p = stack[top]
                if low[u] < low[p]:
                    low[p] = low[u]
    return disc, low, parent, order, sub_end
