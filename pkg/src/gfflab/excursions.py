"""Sign-excursion decomposition of a lattice field and its measure calculus.

A decomposition partitions the support of a field into clusters: either
open-edge components (metric mode, using sampled edge openings) or
nearest-neighbor same-sign components (discrete mode).  Clusters are ordered
by nonincreasing Euclidean diameter, ties broken by the lexicographically
smallest member vertex, and carry the measure h^2 * sum |phi_v| on their
vertices.  Summing sign * measure over all clusters reconstructs the field
exactly.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.fft import dstn
from scipy.sparse.csgraph import connected_components

from ._kernels import cluster_diameters_sq
from .lattice import Field, LatticeDomain
from .metric import EdgeOpenings

__all__ = [
    "ExcursionCluster",
    "Decomposition",
    "SobolevSpec",
    "decompose",
    "decompose_discrete",
    "evaluate_measure",
    "reconstruct",
    "partial_sum",
    "sobolev_norm",
    "clusters_hitting_path",
    "grid_values",
    "write_cluster_raster",
]


@dataclass
class ExcursionCluster:
    """One sign cluster: vertex set, common sign, mass and exact diameter.

    ``id`` is the lexicographically smallest member coordinate ``(i, j)`` and
    breaks ordering ties deterministically.
    """

    vertices: np.ndarray
    sign: int
    mass: float
    diameter: float
    id: tuple[int, int]


class _ClusterSeq(Sequence):
    """Lazy ordered view over a decomposition's clusters."""

    def __init__(self, decomp: "Decomposition"):
        self._d = decomp

    def __len__(self) -> int:
        return self._d.n_clusters

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        d = self._d
        k = int(k)
        if k < 0:
            k += d.n_clusters
        if not 0 <= k < d.n_clusters:
            raise IndexError("cluster rank out of range")
        lo, hi = d.indptr[k], d.indptr[k + 1]
        return ExcursionCluster(
            vertices=d.members[lo:hi],
            sign=int(d.signs[k]),
            mass=float(d.masses[k]),
            diameter=float(d.diameters[k]),
            id=(int(d.ids[k, 0]), int(d.ids[k, 1])),
        )


class Decomposition:
    """Ordered sign-cluster decomposition of one field sample.

    Cluster data is stored rank-aligned: ``members[indptr[k]:indptr[k+1]]``
    are the vertices of cluster ``k`` (ascending interior indices), and
    ``signs``, ``masses``, ``diameters``, ``ids`` follow the same order.
    ``labels[v]`` is the rank of v's cluster, or -1 for zero vertices.
    """

    def __init__(self, mode, domain, labels, indptr, members, signs, masses,
                 diameters, d2, ids, openings=None):
        self.mode = mode
        self.domain = domain
        self.labels = labels
        self.indptr = indptr
        self.members = members
        self.signs = signs
        self.masses = masses
        self.diameters = diameters
        self.d2 = d2
        self.ids = ids
        self.openings = openings

    @property
    def n_clusters(self) -> int:
        return len(self.signs)

    @property
    def clusters(self) -> _ClusterSeq:
        return _ClusterSeq(self)

    def __repr__(self):
        return f"Decomposition(mode={self.mode!r}, clusters={self.n_clusters})"


def _build_decomposition(field: Field, open_uv: np.ndarray, mode: str,
                         openings) -> Decomposition:
    domain = field.domain
    values = field.values
    N = domain.n_interior
    active = values != 0.0
    if len(open_uv):
        adj = sp.coo_matrix(
            (np.ones(len(open_uv), dtype=np.int8), (open_uv[:, 0], open_uv[:, 1])),
            shape=(N, N))
        _, comp = connected_components(adj, directed=False, return_labels=True)
    else:
        comp = np.arange(N)

    act_idx = np.flatnonzero(active)
    if len(act_idx) == 0:
        labels = np.full(N, -1, dtype=np.int64)
        empty = np.empty(0, dtype=np.int64)
        return Decomposition(mode, domain, labels, np.zeros(1, dtype=np.int64),
                             empty, empty, np.empty(0), np.empty(0), empty,
                             np.empty((0, 2), dtype=np.int64), openings)

    c = comp[act_idx]
    order = np.argsort(c, kind="stable")
    members0 = act_idx[order]          # grouped by component, ascending within
    c_sorted = c[order]
    new_group = np.r_[True, c_sorted[1:] != c_sorted[:-1]]
    starts = np.flatnonzero(new_group)
    indptr0 = np.r_[starts, len(c_sorted)].astype(np.int64)

    ij = domain.interior_ij
    h = domain.mesh
    signs0 = np.where(values[members0[starts]] > 0, 1, -1).astype(np.int64)
    masses0 = h * h * np.add.reduceat(np.abs(values[members0]), starts)
    ids0 = ij[members0[starts]]
    d2_0 = cluster_diameters_sq(indptr0, np.ascontiguousarray(ij[members0]))

    # canonical order: nonincreasing diameter, ties by lexicographic min vertex
    perm = np.lexsort((ids0[:, 1], ids0[:, 0], -d2_0))
    rank_of_group = np.empty(len(perm), dtype=np.int64)
    rank_of_group[perm] = np.arange(len(perm))

    group_of_member = np.cumsum(new_group) - 1
    rank_of_member = rank_of_group[group_of_member]
    order2 = np.argsort(rank_of_member, kind="stable")
    members = members0[order2]
    sizes = indptr0[1:] - indptr0[:-1]
    indptr = np.r_[0, np.cumsum(sizes[perm])].astype(np.int64)

    labels = np.full(N, -1, dtype=np.int64)
    labels[members0] = rank_of_member

    return Decomposition(mode, domain, labels, indptr, members,
                         signs0[perm], masses0[perm],
                         h * np.sqrt(d2_0[perm].astype(np.float64)),
                         d2_0[perm], ids0[perm], openings)


def decompose(field: Field, openings: EdgeOpenings) -> Decomposition:
    """Open-edge components of the field support, canonically ordered.

    Raises ValueError("invalid edge state") if any open edge joins vertices
    of opposite sign or touches a zero value.
    """
    if openings.domain is not field.domain:
        raise ValueError("openings were sampled on a different domain")
    e = field.domain.edges
    is_open = openings.omega != 0
    uv = e[is_open]
    if len(uv):
        prod = field.values[uv[:, 0]] * field.values[uv[:, 1]]
        if not (prod > 0).all():
            raise ValueError("invalid edge state: open edge across a sign change or zero")
    return _build_decomposition(field, uv, "metric", openings)


def decompose_discrete(field: Field) -> Decomposition:
    """Nearest-neighbor same-sign components (no metric thinning)."""
    e = field.domain.edges
    prod = field.values[e[:, 0]] * field.values[e[:, 1]]
    return _build_decomposition(field, e[prod > 0], "discrete", None)


def grid_values(domain: LatticeDomain, f) -> np.ndarray:
    """Evaluate a grid function: a vectorized callable f(x, y) or a vertex array."""
    if callable(f):
        pos = domain.positions()
        try:
            out = np.asarray(f(pos[:, 0], pos[:, 1]), dtype=np.float64)
        except (TypeError, ValueError):
            out = np.array([f(x, y) for x, y in pos], dtype=np.float64)
        out = np.broadcast_to(out, (domain.n_interior,)).astype(np.float64)
        return out
    out = np.asarray(f, dtype=np.float64)
    if out.shape != (domain.n_interior,):
        raise ValueError("grid function array does not match the domain")
    return out


def evaluate_measure(cluster: ExcursionCluster, field: Field, f) -> float:
    """The cluster measure paired with f: h^2 * sum_{v in C} f(v) |phi_v|."""
    gf = grid_values(field.domain, f)
    h = field.domain.mesh
    v = cluster.vertices
    return float(h * h * np.sum(gf[v] * np.abs(field.values[v])))


def reconstruct(decomp: Decomposition, field: Field) -> Field:
    """Sum sign * measure-density over all clusters; equals the field exactly."""
    if decomp.domain is not field.domain:
        raise ValueError("decomposition belongs to a different domain")
    lab = decomp.labels
    out = np.zeros_like(field.values)
    hit = lab >= 0
    out[hit] = decomp.signs[lab[hit]] * np.abs(field.values[hit])
    return Field(field.domain, out)


def partial_sum(decomp: Decomposition, field: Field, N: int) -> Field:
    """Field restricted to the first N clusters in canonical order."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if decomp.domain is not field.domain:
        raise ValueError("decomposition belongs to a different domain")
    lab = decomp.labels
    keep = (lab >= 0) & (lab < N)
    out = np.zeros_like(field.values)
    out[keep] = decomp.signs[lab[keep]] * np.abs(field.values[keep])
    return Field(field.domain, out)


@dataclass(frozen=True)
class SobolevSpec:
    """Negative-Sobolev surrogate norm parameters.

    ``box = (x0, y0, side)`` is the embedding square carrying the product
    sine eigenbasis; ``max_freq`` truncates the expansion per axis.
    """

    exponent: float
    box: tuple[float, float, float]
    max_freq: int = 256

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError("Sobolev exponent must be positive")
        if not self.box[2] > 0:
            raise ValueError("embedding square must have positive side")
        if self.max_freq < 1:
            raise ValueError("max frequency must be >= 1")


def sobolev_norm(field: Field, spec: SobolevSpec) -> float:
    """Squared H^{-s} surrogate norm of the zero-extended field.

    The field is zero-extended to the embedding square's mesh-h grid and
    expanded in the L^2-normalized product sine basis of the square; the
    coefficients are h^2-quadrature sums, which the DST evaluates exactly.
    """
    domain = field.domain
    h = domain.mesh
    x0, y0, side = spec.box
    x0d, x1d, y0d, y1d = domain.bounding_box
    tol = 1e-9 * h
    if x0 > x0d + tol or y0 > y0d + tol or x0 + side < x1d - tol or y0 + side < y1d - tol:
        raise ValueError("embedding square does not contain the domain")
    m_f = side / h - 1.0
    i0_f = x0 / h
    j0_f = y0 / h
    m = round(m_f)
    i0 = round(i0_f)
    j0 = round(j0_f)
    if abs(m_f - m) > 1e-9 or abs(i0_f - i0) > 1e-9 or abs(j0_f - j0) > 1e-9 or m < 1:
        raise ValueError("embedding square is not aligned with the mesh")

    raster = np.zeros((m, m))
    ij = domain.interior_ij
    raster[ij[:, 0] - i0 - 1, ij[:, 1] - j0 - 1] = field.values
    coef = h * dstn(raster, type=1, norm="ortho")
    K = min(spec.max_freq, m)
    freq = np.arange(1, K + 1)
    eig = (np.pi ** 2) * (freq[:, None] ** 2 + freq[None, :] ** 2) / side ** 2
    c = coef[:K, :K]
    return float(np.sum(eig ** (-spec.exponent) * c * c))


def clusters_hitting_path(decomp: Decomposition, path) -> tuple[list[ExcursionCluster], np.ndarray]:
    """Clusters meeting a lattice path from the boundary, and their union.

    ``path`` is a sequence of interior vertex indices; it must start next to
    the boundary and advance by single lattice steps.  Returns the hit
    clusters and the vertex set union(clusters) | path.
    """
    domain = decomp.domain
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or len(path) == 0:
        raise ValueError("path must be a nonempty vertex sequence")
    if path.min() < 0 or path.max() >= domain.n_interior:
        raise IndexError("path vertex out of range")
    if domain.boundary_degree[path[0]] == 0:
        raise ValueError("path must start adjacent to the boundary")
    if len(path) > 1:
        steps = np.abs(np.diff(domain.interior_ij[path], axis=0)).sum(axis=1)
        if not (steps == 1).all():
            raise ValueError("disconnected path: consecutive vertices must be adjacent")

    ranks = np.unique(decomp.labels[path])
    ranks = ranks[ranks >= 0]
    clusters = [decomp.clusters[int(r)] for r in ranks]
    if clusters:
        gamma = np.union1d(np.concatenate([c.vertices for c in clusters]), path)
    else:
        gamma = np.unique(path)
    return clusters, gamma


def write_cluster_raster(decomp: Decomposition, fileobj) -> None:
    """Dump cluster labels as a text raster.

    Header line: ``P2-like: width height maxlabel``.  Rows follow top to
    bottom (decreasing j), columns left to right (increasing i); each entry
    is 1 + cluster rank, with 0 marking vertices outside every cluster.
    """
    domain = decomp.domain
    ij = domain.interior_ij
    imin, jmin = ij.min(axis=0)
    imax, jmax = ij.max(axis=0)
    w = int(imax - imin + 1)
    hgt = int(jmax - jmin + 1)
    raster = np.zeros((hgt, w), dtype=np.int64)
    raster[ij[:, 1] - jmin, ij[:, 0] - imin] = decomp.labels + 1
    fileobj.write(f"P2-like: {w} {hgt} {decomp.n_clusters}\n")
    for row in raster[::-1]:
        fileobj.write(" ".join(str(int(x)) for x in row))
        fileobj.write("\n")
