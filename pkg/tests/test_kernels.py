"""Brute-force oracles for the compiled geometry and DFS kernels."""

import numpy as np
from hypothesis import given, settings, strategies as st

from gfflab._kernels import articulation_dfs, cluster_diameters_sq


def _brute_d2(pts):
    if len(pts) < 2:
        return 0
    d = pts[:, None, :] - pts[None, :, :]
    return int((d ** 2).sum(axis=2).max())


def _grouped(pts_list):
    """Pack point groups into (indptr, members) with within-group lex order."""
    groups = []
    for pts in pts_list:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        groups.append(pts[order])
    sizes = [len(g) for g in groups]
    indptr = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    members = np.ascontiguousarray(np.vstack(groups))
    return indptr, members


def test_diameters_hand_cases():
    indptr, members = _grouped([
        [(0, 0)],                            # singleton
        [(0, 0), (3, 4)],                    # 3-4-5 pair
        [(0, 0), (1, 0), (0, 1), (1, 1)],    # unit square
    ])
    out = cluster_diameters_sq(indptr, members)
    assert out.tolist() == [0, 25, 2]


def test_diameters_collinear_large_cluster():
    # collinear points stress the hull path (degenerate hull)
    pts = [(k, 2 * k) for k in range(120)]
    indptr, members = _grouped([pts])
    out = cluster_diameters_sq(indptr, members)
    assert out[0] == 119 ** 2 * 5


@given(st.lists(
    st.lists(st.tuples(st.integers(-40, 40), st.integers(-40, 40)),
             min_size=1, max_size=90, unique=True),
    min_size=1, max_size=4))
@settings(max_examples=60, deadline=None)
def test_diameters_match_brute_force(groups):
    indptr, members = _grouped(groups)
    out = cluster_diameters_sq(indptr, members)
    for k, pts in enumerate(groups):
        assert out[k] == _brute_d2(np.asarray(pts, dtype=np.int64).reshape(-1, 2))


def _csr(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for u in range(n):
        indptr[u + 1] = indptr[u] + len(adj[u])
    indices = np.concatenate([np.sort(a) for a in adj]) if edges else np.empty(0, np.int64)
    return indptr, indices.astype(np.int64)


def _brute_articulation(n, edges, u):
    """Does removing u disconnect the remaining graph?"""
    rest = [v for v in range(n) if v != u]
    if len(rest) <= 1:
        return False
    adj = {v: set() for v in rest}
    for a, b in edges:
        if a != u and b != u:
            adj[a].add(b)
            adj[b].add(a)
    seen = {rest[0]}
    stack = [rest[0]]
    while stack:
        w = stack.pop()
        for x in adj[w]:
            if x not in seen:
                seen.add(x)
                stack.append(x)
    return len(seen) < len(rest)


def _separated_children(n, edges, root):
    """Children whose subtree is cut off by their parent, per the DFS arrays."""
    indptr, indices = _csr(n, edges)
    disc, low, parent, order, sub_end = articulation_dfs(indptr, indices, root)
    return disc, low, parent, order, sub_end


def test_dfs_orders_are_consistent():
    # 0-1-2 path plus triangle 2-3-4-2
    n, edges = 5, [(0, 1), (1, 2), (2, 3), (3, 4), (2, 4)]
    disc, low, parent, order, sub_end = _separated_children(n, edges, 0)
    assert sorted(disc.tolist()) == list(range(n))
    assert (order[disc] == np.arange(n)).all()
    assert parent[0] == -1
    assert sub_end[0] == n
    for v in range(1, n):
        p = parent[v]
        assert disc[p] < disc[v] <= sub_end[p] - 1
        assert sub_end[v] <= sub_end[p]


def test_dfs_low_detects_cut_vertices():
    """low[child] >= disc[u] for some child iff u cuts the graph (u not root)."""
    rng = np.random.default_rng(2024)
    for _ in range(40):
        n = int(rng.integers(3, 12))
        # random connected graph: spanning tree plus extra edges
        edges = {(int(rng.integers(0, v)), v) for v in range(1, n)}
        for _ in range(int(rng.integers(0, n))):
            a, b = sorted(map(int, rng.integers(0, n, 2)))
            if a != b:
                edges.add((a, b))
        edges = sorted(edges)
        indptr, indices = _csr(n, edges)
        disc, low, parent, order, sub_end = articulation_dfs(indptr, indices, 0)
        for u in range(1, n):
            kids = [v for v in range(n) if parent[v] == u]
            flagged = any(low[v] >= disc[u] for v in kids)
            assert flagged == _brute_articulation(n, edges, u)


def test_dfs_subtree_spans_partition_descendants():
    rng = np.random.default_rng(7)
    n = 30
    edges = sorted({(int(rng.integers(0, v)), v) for v in range(1, n)})
    indptr, indices = _csr(n, edges)
    disc, low, parent, order, sub_end = articulation_dfs(indptr, indices, 0)
    # vertex w is in u's subtree iff disc[u] <= disc[w] < sub_end[u]
    def ancestors(w):
        out = set()
        while w != -1:
            out.add(w)
            w = parent[w]
        return out
    for u in range(n):
        span = set(order[disc[u]:sub_end[u]].tolist())
        truth = {w for w in range(n) if u in ancestors(w)}
        assert span == truth
