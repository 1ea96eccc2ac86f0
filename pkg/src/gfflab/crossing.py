"""Annulus crossing probabilities for sign clusters on the standard square.

A crossing of the annulus {a <= |z|_inf <= b} inside D = (-1,1)^2 is a single
cluster whose restriction to the (lattice-fattened) annulus connects the
inner contour to the outer one through open edges.  Contours are fattened by
half a mesh: a vertex meets S_a when its sup-norm lies within h/2 of a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .excursions import Decomposition, decompose, decompose_discrete
from .lattice import GreenOperator, LatticeDomain, STANDARD_SQUARE, build_domain, sample_field
from .metric import sample_openings

__all__ = [
    "AnnulusSpec",
    "CrossingEstimate",
    "wilson_interval",
    "crosses",
    "estimate",
    "continuity_scan",
    "ScanRow",
]


@dataclass(frozen=True)
class AnnulusSpec:
    """Annulus between the square contours S_a and S_b, 0 < a <= b < 1."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a <= self.b < 1.0):
            raise ValueError("annulus requires 0 < a <= b < 1")


@dataclass(frozen=True)
class CrossingEstimate:
    p_hat: float
    samples: int
    ci_low: float
    ci_high: float


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the interval ends exactly at 0 and 1 for degenerate counts; keep that
    # exact under rounding so p_hat always lies inside
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


def _require_standard_square(domain: LatticeDomain) -> None:
    x0, x1, y0, y1 = domain.bounding_box
    tol = 1e-9
    ok = (domain.rect_shape is not None
          and abs(x0 + 1) < tol and abs(x1 - 1) < tol
          and abs(y0 + 1) < tol and abs(y1 - 1) < tol)
    if not ok:
        raise ValueError("crossing estimator requires the standard square (-1,1)^2")


def crosses(decomp: Decomposition, spec: AnnulusSpec, domain: LatticeDomain) -> bool:
    """True iff one cluster connects S_a to S_b inside the closed annulus.

    Connectivity is evaluated on the annulus-restricted open-edge subgraph
    (same-sign adjacency in discrete mode), so paths through the inner disk
    or the outside do not count.
    """
    _require_standard_square(domain)
    h = domain.mesh
    pos = domain.positions()
    cheb = np.maximum(np.abs(pos[:, 0]), np.abs(pos[:, 1]))
    half = h / 2.0
    in_ann = (cheb >= spec.a - half) & (cheb <= spec.b + half) & (decomp.labels >= 0)
    if not in_ann.any():
        return False
    inner_cut = spec.a + half
    outer_cut = spec.b - half

    if decomp.mode == "metric":
        uv = domain.edges[decomp.openings.omega != 0]
    else:
        e = domain.edges
        lab = decomp.labels
        uv = e[(lab[e[:, 0]] >= 0) & (lab[e[:, 0]] == lab[e[:, 1]])]
    keep = in_ann[uv[:, 0]] & in_ann[uv[:, 1]]
    uv = uv[keep]

    N = domain.n_interior
    if len(uv):
        adj = sp.coo_matrix((np.ones(len(uv), dtype=np.int8), (uv[:, 0], uv[:, 1])),
                            shape=(N, N))
        _, comp = connected_components(adj, directed=False, return_labels=True)
    else:
        comp = np.arange(N)
    ann_idx = np.flatnonzero(in_ann)
    c = comp[ann_idx]
    ch = cheb[ann_idx]
    order = np.argsort(c, kind="stable")
    c_sorted = c[order]
    ch_sorted = ch[order]
    starts = np.flatnonzero(np.r_[True, c_sorted[1:] != c_sorted[:-1]])
    cmin = np.minimum.reduceat(ch_sorted, starts)
    cmax = np.maximum.reduceat(ch_sorted, starts)
    return bool(np.any((cmin <= inner_cut) & (cmax >= outer_cut)))


def estimate(spec: AnnulusSpec, n: int, M: int, rng: np.random.Generator,
             mode: str = "metric") -> CrossingEstimate:
    """Monte Carlo crossing probability over M independent field samples."""
    if M < 1:
        raise ValueError("M must be >= 1")
    domain = build_domain(STANDARD_SQUARE, n)
    gop = GreenOperator(domain)
    hits = 0
    for _ in range(M):
        fld = sample_field(gop, rng)
        if mode == "metric":
            dec = decompose(fld, sample_openings(fld, rng))
        else:
            dec = decompose_discrete(fld)
        hits += crosses(dec, spec, domain)
    lo, hi = wilson_interval(hits, M)
    return CrossingEstimate(hits / M, M, lo, hi)


@dataclass(frozen=True)
class ScanRow:
    n: int
    a: float
    b: float
    M: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed0: int


def continuity_scan(a_grid, b_grid, n_list, M: int, rng: np.random.Generator,
                    mode: str = "metric", seed0: int = 0,
                    check_monotone: bool = False) -> list[ScanRow]:
    """p_hat over an (a, b) grid, coupling all pairs on shared samples per n.

    Pairs with a > b are skipped.  With ``check_monotone`` the per-sample
    containment (crossing nonincreasing in b for fixed a) is asserted on
    every sample, which is exact and independent of Monte Carlo noise.
    """
    pairs = [(a, b) for a in a_grid for b in b_grid if a <= b]
    rows: list[ScanRow] = []
    for n in n_list:
        domain = build_domain(STANDARD_SQUARE, n)
        gop = GreenOperator(domain)
        counts = np.zeros(len(pairs), dtype=np.int64)
        for _ in range(M):
            fld = sample_field(gop, rng)
            if mode == "metric":
                dec = decompose(fld, sample_openings(fld, rng))
            else:
                dec = decompose_discrete(fld)
            outcome = np.array([crosses(dec, AnnulusSpec(a, b), domain)
                                for a, b in pairs])
            counts += outcome
            if check_monotone:
                for a in set(p[0] for p in pairs):
                    bs = sorted(p[1] for p in pairs if p[0] == a)
                    vals = [outcome[pairs.index((a, b))] for b in bs]
                    for earlier, later in zip(vals, vals[1:]):
                        if later and not earlier:
                            raise AssertionError("crossing not monotone in b on a sample")
        for (a, b), k in zip(pairs, counts):
            lo, hi = wilson_interval(int(k), M)
            rows.append(ScanRow(n, a, b, M, int(k) / M, lo, hi, seed0))
    return rows
