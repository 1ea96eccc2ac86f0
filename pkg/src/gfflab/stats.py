"""Sample-level statistics built on the excursion decomposition.

Includes the second-moment decomposition identity and its 2q-moment
inequality, independence diagnostics for cluster signs, the height-gap
statistic read off hole boundary values, a domain Markov residual check and
the exact tail norm of a field restricted to a subdomain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.ndimage import distance_transform_edt
from scipy.sparse.csgraph import connected_components

from ._kernels import articulation_dfs
from .excursions import Decomposition, clusters_hitting_path, decompose, \
    decompose_discrete, grid_values
from .lattice import Field, GreenOperator, LatticeDomain, STANDARD_SQUARE, \
    build_domain, restricted_laplacian, sample_field
from .metric import sample_openings

__all__ = [
    "HeightGapConstants",
    "HEIGHT_GAP",
    "OrthogonalityReport",
    "l2_identity_check",
    "moment_inequality_check",
    "SignTestReport",
    "sign_independence_test",
    "HeightGapReport",
    "height_gap_statistic",
    "MarkovReport",
    "markov_check",
    "tail_norm",
]


@dataclass(frozen=True)
class HeightGapConstants:
    """Limiting hole boundary heights: 2*lam for metric clusters, lam conjectured discrete."""

    lam: float = math.sqrt(math.pi / 8.0)
    two_lambda: float = math.sqrt(math.pi / 2.0)


HEIGHT_GAP = HeightGapConstants()


# ---------------------------------------------------------------------------
# second-moment identity and 2q-moment inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrthogonalityReport:
    lhs: float
    rhs: float
    diff: float
    pooled_se: float
    max_linear_residual: float
    samples: int
    q: int
    j_desc: str

    @property
    def z(self) -> float:
        return self.diff / self.pooled_se if self.pooled_se > 0 else 0.0


def _moment_samples(n: int, f, J, q: int, M: int, rng: np.random.Generator,
                    shape) -> OrthogonalityReport:
    domain = build_domain(shape, n)
    gop = GreenOperator(domain)
    gf = grid_values(domain, f)
    h2 = domain.mesh ** 2
    lhs_s = np.empty(M)
    rhs_s = np.empty(M)
    max_linres = 0.0
    all_ranks = J == "all"
    if not all_ranks:
        ranks0 = np.asarray(sorted(set(int(k) for k in J)), dtype=np.int64) - 1
        if len(ranks0) and ranks0.min() < 0:
            raise ValueError("cluster ranks in J are 1-based")
    for s in range(M):
        fld = sample_field(gop, rng)
        dec = decompose(fld, sample_openings(fld, rng))
        x = h2 * np.dot(fld.values, gf)
        per = h2 * np.add.reduceat(
            gf[dec.members] * np.abs(fld.values[dec.members]), dec.indptr[:-1]) \
            if dec.n_clusters else np.empty(0)
        if all_ranks:
            a = per
            sigma = dec.signs
            rest = 0.0
        else:
            sel = ranks0[ranks0 < dec.n_clusters]
            a = per[sel]
            sigma = dec.signs[sel]
            keep = np.isin(dec.labels, sel, invert=True)
            rest = h2 * np.dot(fld.values[keep], gf[keep])
        lhs_s[s] = x ** (2 * q)
        rhs_s[s] = np.sum(a ** (2 * q)) + rest ** (2 * q)
        linres = abs(x - float(np.dot(sigma, a)) - rest)
        if linres > max_linres:
            max_linres = linres
    diff = lhs_s - rhs_s
    return OrthogonalityReport(
        lhs=float(lhs_s.mean()), rhs=float(rhs_s.mean()),
        diff=float(diff.mean()),
        pooled_se=float(diff.std(ddof=1) / math.sqrt(M)) if M > 1 else float("inf"),
        max_linear_residual=max_linres, samples=M, q=q,
        j_desc="all" if all_ranks else ",".join(str(k) for k in sorted(set(int(k) for k in J))))


def l2_identity_check(n: int, f, J, M: int, rng: np.random.Generator,
                      shape=STANDARD_SQUARE) -> OrthogonalityReport:
    """Same-sample check of E[(phi,f)^2] = sum_{k in J} E[(nu_k,f)^2] + E[(rest,f)^2].

    ``J`` is a collection of 1-based cluster ranks, or "all".  The report's
    ``diff`` estimates the cross terms (zero in expectation because cluster
    signs are centered given everything else) with a pooled standard error
    from the per-sample differences.  ``max_linear_residual`` bounds the
    per-sample linear identity (phi,f) = sum sigma_k (nu_k,f) + (rest,f),
    which is exact; with J = "all" the rest vanishes and this is the
    reconstruction identity.
    """
    return _moment_samples(n, f, J, 1, M, rng, shape)


def moment_inequality_check(n: int, f, J, q: int, M: int, rng: np.random.Generator,
                            shape=STANDARD_SQUARE) -> OrthogonalityReport:
    """2q-moment comparison: E[(phi,f)^{2q}] >= sum_J E[(nu_k,f)^{2q}] + E[rest^{2q}].

    Returns the same report shape as l2_identity_check; ``diff`` = LHS - RHS
    should be nonnegative up to Monte Carlo noise for every q >= 1.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    return _moment_samples(n, f, J, q, M, rng, shape)


# ---------------------------------------------------------------------------
# sign independence
# ---------------------------------------------------------------------------

@dataclass
class SignTestReport:
    K: int
    samples_used: int
    samples_skipped: int
    threshold: float
    rank_means: np.ndarray
    pair_corr: np.ndarray
    diam_corr: np.ndarray
    mass_corr: np.ndarray
    failures: list = dataclass_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _safe_corr(x: np.ndarray, y: np.ndarray) -> float:
    sx = x.std()
    sy = y.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def sign_independence_test(n: int, K: int, M: int, rng: np.random.Generator,
                           corrupt: bool = False,
                           shape=STANDARD_SQUARE) -> SignTestReport:
    """Rademacher diagnostics for the top-K cluster signs.

    Checks per-rank means, all pairwise sign correlations, and correlations
    of each sign with its cluster's diameter and mass, against the 3/sqrt(M)
    null band.  Samples with fewer than K clusters are skipped and counted.
    With ``corrupt=True`` the rank-2 sign is overwritten by the rank-1 sign,
    a corrupted null that the pairwise check must reject.
    """
    domain = build_domain(shape, n)
    gop = GreenOperator(domain)
    signs = []
    diams = []
    masses = []
    skipped = 0
    for _ in range(M):
        fld = sample_field(gop, rng)
        dec = decompose(fld, sample_openings(fld, rng))
        if dec.n_clusters < K:
            skipped += 1
            continue
        signs.append(dec.signs[:K].astype(np.float64))
        diams.append(dec.diameters[:K].copy())
        masses.append(dec.masses[:K].copy())
    used = len(signs)
    if used < 2:
        raise ValueError("not enough samples with K clusters")
    S = np.array(signs)
    D = np.array(diams)
    A = np.array(masses)
    if corrupt:
        S[:, 1] = S[:, 0]
    thr = 3.0 / math.sqrt(used)
    failures = []
    means = S.mean(axis=0)
    for k in range(K):
        if abs(means[k]) > thr:
            failures.append(("mean", k + 1, float(means[k])))
    pair = np.eye(K)
    for a in range(K):
        for b in range(a + 1, K):
            c = _safe_corr(S[:, a], S[:, b])
            pair[a, b] = pair[b, a] = c
            if abs(c) > thr:
                failures.append(("pair_corr", (a + 1, b + 1), c))
    dcorr = np.array([_safe_corr(S[:, k], D[:, k]) for k in range(K)])
    mcorr = np.array([_safe_corr(S[:, k], A[:, k]) for k in range(K)])
    for k in range(K):
        if abs(dcorr[k]) > thr:
            failures.append(("diam_corr", k + 1, float(dcorr[k])))
        if abs(mcorr[k]) > thr:
            failures.append(("mass_corr", k + 1, float(mcorr[k])))
    return SignTestReport(K, used, skipped, thr, means, pair, dcorr, mcorr, failures)


# ---------------------------------------------------------------------------
# height gap through enclosed-region plateau heights
# ---------------------------------------------------------------------------

def _plateau_depth(n: int) -> float:
    """Erosion depth (lattice units) past which the interior plateau is read.

    Grows with the level so the discarded boundary layer keeps shrinking in
    lattice proportion while the plateau estimate sharpens.
    """
    return float(max(4, 2 * (n - 4)))


def _cluster_tree(domain: LatticeDomain, labels: np.ndarray):
    """Enclosure tree of clusters via the contact graph.

    Nodes are clusters (plus singleton nodes for any unlabeled vertices and
    one root for the boundary).  A depth-first search from the root exposes
    enclosure: a child subtree whose low-link does not climb past its parent
    is separated from the boundary by that parent, i.e. sits inside one of
    the parent's holes.
    """
    ncl = int(labels.max()) + 1
    node = labels.copy()
    zeros = np.flatnonzero(labels < 0)
    node[zeros] = ncl + np.arange(len(zeros))
    n_nodes = ncl + len(zeros) + 1
    root = n_nodes - 1

    e = domain.edges
    nu = node[e[:, 0]]
    nv = node[e[:, 1]]
    diff = nu != nv
    lo = np.minimum(nu[diff], nv[diff])
    hi = np.maximum(nu[diff], nv[diff])
    ring = np.unique(node[domain.boundary_degree > 0])
    keys = np.unique(np.concatenate([lo * n_nodes + hi, ring * n_nodes + root]))
    ea = keys // n_nodes
    eb = keys % n_nodes
    deg = np.bincount(ea, minlength=n_nodes) + np.bincount(eb, minlength=n_nodes)
    indptr = np.r_[0, np.cumsum(deg)].astype(np.int64)
    src = np.concatenate([ea, eb])
    dst = np.concatenate([eb, ea])
    indices = dst[np.argsort(src, kind="stable")].astype(np.int64)

    disc, low, parent, order, sub_end = articulation_dfs(indptr, indices, root)
    cand = np.flatnonzero((parent >= 0) & (parent != root))
    separated = cand[low[cand] >= disc[parent[cand]]]

    ring_mask = np.zeros(n_nodes, dtype=bool)
    ring_mask[ring] = True
    return node, ncl, disc, parent, sub_end, separated, ring_mask


def _plateau_contributions(domain: LatticeDomain, labels: np.ndarray,
                           signs: np.ndarray, values: np.ndarray,
                           min_vertices: int, depth_min: float):
    """Per-loop plateau heights sigma * mean(phi over the deep interior).

    For every cluster not touching the boundary ring, fills its holes to get
    the region enclosed by its outer boundary, erodes that region by
    ``depth_min`` lattice units, and averages sigma * phi over the remaining
    deep vertices when at least ``min_vertices`` of them survive.  Returns
    (means, deep_counts).
    """
    ncl = int(labels.max()) + 1
    if ncl == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    node, _, disc, parent, sub_end, separated, ring_mask = \
        _cluster_tree(domain, labels)

    vpos = disc[node]
    vorder = np.argsort(vpos, kind="stable")
    vps = vpos[vorder]
    # vertex count per disc position, prefix-summed for subtree sizes
    pc = np.r_[0, np.cumsum(np.bincount(vpos, minlength=len(disc)))]

    filled = np.bincount(labels[labels >= 0], minlength=ncl).astype(np.int64)
    by_parent: dict[int, list[int]] = {}
    for c in separated:
        p = int(parent[c])
        if p < ncl:
            filled[p] += pc[sub_end[c]] - pc[disc[c]]
            by_parent.setdefault(p, []).append(int(c))

    # a deep vertex needs an r-ball inside the region, so tiny regions cannot qualify
    floor = max(int(math.ceil(math.pi * depth_min ** 2)), min_vertices)
    contribs = []
    counts = []
    for v in np.flatnonzero(filled >= floor):
        if ring_mask[v]:
            continue
        spans = [(disc[v], disc[v] + 1)]
        spans += [(disc[c], sub_end[c]) for c in by_parent.get(int(v), [])]
        members = np.concatenate([
            vorder[np.searchsorted(vps, s):np.searchsorted(vps, t)]
            for s, t in spans])
        ij = domain.interior_ij[members]
        a0 = ij[:, 0].min()
        b0 = ij[:, 1].min()
        mask = np.zeros((ij[:, 0].max() - a0 + 3, ij[:, 1].max() - b0 + 3),
                        dtype=bool)
        mask[ij[:, 0] - a0 + 1, ij[:, 1] - b0 + 1] = True
        depth = distance_transform_edt(mask)[ij[:, 0] - a0 + 1, ij[:, 1] - b0 + 1]
        deep = depth >= depth_min
        ndeep = int(deep.sum())
        if ndeep >= min_vertices:
            contribs.append(signs[v] * float(values[members[deep]].mean()))
            counts.append(ndeep)
    return np.asarray(contribs), np.asarray(counts, dtype=np.int64)


@dataclass(frozen=True)
class HeightGapReport:
    mode: str
    value: float
    se: float
    region_count: int
    samples: int
    samples_contributing: int
    insufficient: bool


def height_gap_statistic(n: int, mode: str = "metric", min_hole_vertices: int = 16,
                         M: int = 200, rng: np.random.Generator | None = None,
                         shape=STANDARD_SQUARE) -> HeightGapReport:
    """Plateau height of the field inside cluster outer boundaries.

    Conditioned on the outer boundary loop of a cluster with sign sigma, the
    field inside is sigma times a constant plus an independent zero-boundary
    field, and the constant is the height gap: 2*lam for metric clusters,
    lam conjecturally for discrete sign clusters.  Each cluster not touching
    the boundary contributes sigma * phi averaged over the deep interior of
    the region enclosed by its outer boundary (holes filled, then eroded to
    drop the boundary layer where the plateau has not developed).  Regions
    with fewer than ``min_hole_vertices`` deep vertices are ignored, and the
    pooled value averages over deep vertices, so large loops carry their
    area's weight.  Standard error is computed across per-sample values
    (regions within one sample are dependent).
    """
    if min_hole_vertices < 4:
        raise ValueError("min_hole_vertices must be >= 4")
    if rng is None:
        rng = np.random.default_rng()
    domain = build_domain(shape, n)
    gop = GreenOperator(domain)
    depth = _plateau_depth(n)
    total = 0.0
    total_w = 0
    count = 0
    per_sample = []
    for _ in range(M):
        fld = sample_field(gop, rng)
        if mode == "metric":
            dec = decompose(fld, sample_openings(fld, rng))
        elif mode == "discrete":
            dec = decompose_discrete(fld)
        else:
            raise ValueError("mode must be 'metric' or 'discrete'")
        contrib, deep = _plateau_contributions(domain, dec.labels, dec.signs,
                                               fld.values, min_hole_vertices,
                                               depth)
        if not len(contrib):
            continue
        total += float(np.dot(contrib, deep))
        total_w += int(deep.sum())
        count += len(contrib)
        per_sample.append(float(np.dot(contrib, deep)) / deep.sum())
    insufficient = count == 0
    value = total / total_w if total_w else float("nan")
    se = (float(np.std(per_sample, ddof=1) / math.sqrt(len(per_sample)))
          if len(per_sample) > 1 else float("inf"))
    return HeightGapReport(mode, value, se, count, M, len(per_sample), insufficient)


# ---------------------------------------------------------------------------
# domain Markov residual check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovProbeStat:
    probe: int
    used: int
    skipped: int
    mean: float
    se: float
    z: float


@dataclass(frozen=True)
class MarkovReport:
    probes: tuple
    samples: int

    @property
    def max_abs_z(self) -> float:
        return max(abs(p.z) for p in self.probes)


def markov_check(n: int, path, probes, M: int, rng: np.random.Generator,
                 shape=STANDARD_SQUARE) -> MarkovReport:
    """Residual variance versus the complement Green function.

    Per sample, removes the clusters hitting the path (plus the path), and at
    every probe outside the removed set compares the squared residual field
    value with the exact Green variance of the induced complement graph.  The
    per-probe mean of (residual^2 - G_complement) targets zero; probes that
    land inside the removed set are skipped and counted.
    """
    domain = build_domain(shape, n)
    gop = GreenOperator(domain)
    N = domain.n_interior
    probes = [int(p) for p in probes]
    vals: dict[int, list[float]] = {p: [] for p in probes}
    skipped = {p: 0 for p in probes}
    e = domain.edges
    for _ in range(M):
        fld = sample_field(gop, rng)
        dec = decompose(fld, sample_openings(fld, rng))
        _, gamma = clusters_hitting_path(dec, path)
        outside = np.ones(N, dtype=bool)
        outside[gamma] = False
        active = [p for p in probes if outside[p]]
        for p in probes:
            if not outside[p]:
                skipped[p] += 1
        if not active:
            continue
        keep = outside[e[:, 0]] & outside[e[:, 1]]
        uv = e[keep]
        adj = sp.coo_matrix((np.ones(len(uv), dtype=np.int8), (uv[:, 0], uv[:, 1])),
                            shape=(N, N))
        _, comp = connected_components(adj, directed=False, return_labels=True)
        by_comp: dict[int, list[int]] = {}
        for p in active:
            by_comp.setdefault(int(comp[p]), []).append(p)
        for cid, plist in by_comp.items():
            members = np.flatnonzero(outside & (comp == cid))
            lsub = restricted_laplacian(gop.laplacian, members)
            lu = spla.splu(lsub.tocsc())
            local = {int(v): k for k, v in enumerate(members)}
            for p in plist:
                rhs = np.zeros(len(members))
                rhs[local[p]] = 1.0
                gpp = lu.solve(rhs)[local[p]]
                vals[p].append(fld.values[p] ** 2 - gpp)
    stats = []
    for p in probes:
        arr = np.asarray(vals[p])
        used = len(arr)
        if used > 1:
            mean = float(arr.mean())
            se = float(arr.std(ddof=1) / math.sqrt(used))
            z = mean / se if se > 0 else 0.0
        else:
            mean, se, z = float("nan"), float("inf"), 0.0
        stats.append(MarkovProbeStat(p, used, skipped[p], mean, se, float(z)))
    return MarkovReport(tuple(stats), M)


# ---------------------------------------------------------------------------
# exact tail norm
# ---------------------------------------------------------------------------

def tail_norm(domain: LatticeDomain, subdomain, gop: GreenOperator) -> float:
    """Exact h^4 sum over the subdomain of G_D(x,y) * G_sub(x,y).

    ``subdomain`` is a collection of interior vertex indices; its induced
    graph may have several components, and the subdomain Green function is
    block-diagonal over them (handled automatically by the induced
    Laplacian).  Empty subdomain gives 0.
    """
    S = np.unique(np.asarray(list(subdomain), dtype=np.int64))
    if len(S) == 0:
        return 0.0
    if S.min() < 0 or S.max() >= domain.n_interior:
        raise IndexError("subdomain vertex out of range")
    if len(S) > 4096:
        raise ValueError("subdomain too large for the dense tail norm")
    N = domain.n_interior
    if N <= 4096:
        G = np.linalg.inv(gop.laplacian.toarray())
        gd = G[np.ix_(S, S)]
    else:
        lu = spla.splu(gop.laplacian.tocsc())
        rhs = np.zeros((N, len(S)))
        rhs[S, np.arange(len(S))] = 1.0
        gd = lu.solve(rhs)[S]
    lsub = restricted_laplacian(gop.laplacian, S)
    ghat = np.linalg.inv(lsub.toarray())
    return float(domain.mesh ** 4 * np.sum(gd * ghat))
