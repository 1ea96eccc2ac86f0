"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints a single PASS/FAIL line (visible under ``pytest -s``); the
assert carries the same condition so plain ``pytest`` reports it too.  Seeds
are frozen through derive_seed so every run is bit-reproducible.  Two checks
are trend reports rather than gates and say so in their printed line.
"""

import math
import time

import numpy as np

from gfflab.crossing import continuity_scan
from gfflab.excursions import (
    SobolevSpec,
    decompose,
    decompose_discrete,
    grid_values,
    partial_sum,
    reconstruct,
    sobolev_norm,
)
from gfflab.harness import default_markov_layout, derive_seed
from gfflab.lattice import (
    DomainSpec,
    Field,
    GreenOperator,
    STANDARD_SQUARE,
    build_domain,
    sample_field,
)
from gfflab.metric import bridge_hit_estimate, sample_openings
from gfflab.minkowski import gauge_ratio
from gfflab.spinmodel import (
    sign_covariance_identity_check,
    spin_discrepancy,
    spin_discrepancy_exact,
)
from gfflab.stats import (
    HEIGHT_GAP,
    height_gap_statistic,
    l2_identity_check,
    markov_check,
    sign_independence_test,
    tail_norm,
)

ONE = lambda x, y: 1.0


def _rng(tag):
    return np.random.default_rng(derive_seed(2026, 0, "acceptance:" + tag))


def _report(num, ok, detail):
    print(f"[{num:2d}/15] {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_01_green_function_exact_values():
    t0 = time.time()
    one = build_domain(DomainSpec.square(2.0**-6), 2)
    g1 = GreenOperator(one).green(0, 0)
    two = build_domain(DomainSpec(0.45, 0.1, (0.125, 0.0)), 2)
    gop = GreenOperator(two)
    errs = (
        abs(g1 - 0.25),
        abs(gop.green(0, 0) - 4.0 / 15.0),
        abs(gop.green(0, 1) - 1.0 / 15.0),
        abs(gop.green(1, 1) - 4.0 / 15.0),
    )
    ok = max(errs) <= 1e-12
    assert _report(1, ok, f"Green entries 1/4 and (4/15, 1/15), max err "
                          f"{max(errs):.2e} [{time.time() - t0:.1f}s]")


def test_02_two_vertex_sample_covariance():
    t0 = time.time()
    two = build_domain(DomainSpec(0.45, 0.1, (0.125, 0.0)), 2)
    gop = GreenOperator(two)
    M = 10**6
    batch = gop.sample_batch(M, _rng("c2"))
    emp = batch.T @ batch / M
    G = np.array([[gop.green(0, 0), gop.green(0, 1)],
                  [gop.green(1, 0), gop.green(1, 1)]])
    se_diag = math.sqrt(2.0 / M) * G[0, 0]
    se_off = math.sqrt((G[0, 0] ** 2 + G[0, 1] ** 2) / M)
    zs = (
        (emp[0, 0] - G[0, 0]) / se_diag,
        (emp[1, 1] - G[1, 1]) / se_diag,
        (emp[0, 1] - G[0, 1]) / se_off,
    )
    worst = max(abs(z) for z in zs)
    ok = worst <= 3.0
    assert _report(2, ok, f"empirical covariance at M=10^6, worst |z|="
                          f"{worst:.2f} [{time.time() - t0:.1f}s]")


def test_03_center_variance_log_increments():
    t0 = time.time()
    target = math.log(2.0) / (2.0 * math.pi)
    vals = []
    for n in (6, 7, 8, 9):
        dom = build_domain(STANDARD_SQUARE, n)
        c = dom.vertex_index((0, 0))
        vals.append(GreenOperator(dom).green(c, c))
    incs = [vals[k + 1] - vals[k] for k in range(3)]
    rel = max(abs(inc - target) / target for inc in incs)
    ok = rel <= 0.20
    assert _report(3, ok, f"center variance increments vs log(2)/(2 pi), "
                          f"worst rel err {rel:.3f} [{time.time() - t0:.0f}s]")


def test_04_bridge_zero_hit_against_closed_form():
    t0 = time.time()
    rng = _rng("c4")
    worst = 0.0
    for a in np.linspace(0.2, 2.0, 5):
        for b in np.linspace(0.2, 2.0, 5):
            p_hat, se = bridge_hit_estimate(float(a), float(b), 32, 10**5, rng)
            exact = math.exp(-2.0 * a * b)
            # |(1 - exp(-2ab)) - (1 - p_hat)| == |p_hat - exact|
            z = abs(p_hat - exact) / se if se > 0 else 0.0
            worst = max(worst, z)
    ok = worst <= 3.0
    assert _report(4, ok, f"bridge hit probability on the 5x5 (a,b) grid, "
                          f"worst |z|={worst:.2f} [{time.time() - t0:.0f}s]")


def test_05_signed_clusters_rebuild_the_field():
    t0 = time.time()
    dom = build_domain(STANDARD_SQUARE, 7)
    gop = GreenOperator(dom)
    rng = _rng("c5")
    worst = 0.0
    for _ in range(100):
        fld = sample_field(gop, rng)
        for dec in (decompose(fld, sample_openings(fld, rng)),
                    decompose_discrete(fld)):
            rec = reconstruct(dec, fld)
            worst = max(worst, float(np.max(np.abs(rec.values - fld.values))))
    ok = worst <= 1e-12
    assert _report(5, ok, f"sum of signed cluster restrictions equals the "
                          f"field, worst residual {worst:.1e} "
                          f"[{time.time() - t0:.0f}s]")


def test_06_negative_sobolev_norm_of_product_sine():
    t0 = time.time()
    unit = build_domain(DomainSpec.square(1.0, (0.5, 0.5)), 7)
    f = grid_values(unit, lambda x, y: math.sin(math.pi * x) * math.sin(math.pi * y))
    val = sobolev_norm(Field(unit, f), SobolevSpec(1.0, (0.0, 0.0, 1.0)))
    exact = 0.25 / (2.0 * math.pi**2)
    rel = abs(val - exact) / exact
    ok = rel <= 0.02
    assert _report(6, ok, f"H^-1 norm of sin(pi x) sin(pi y) at h=1/128, "
                          f"rel err {rel:.1e} [{time.time() - t0:.1f}s]")


def test_07_l2_mass_splits_across_clusters():
    t0 = time.time()
    top = l2_identity_check(6, ONE, (1,), 2000, _rng("c7:J1"))
    full = l2_identity_check(6, ONE, "all", 2000, _rng("c7:Jall"))
    ok = abs(top.z) <= 3.0 and full.max_linear_residual <= 1e-10
    assert _report(7, ok, f"squared-mass split, J={{1}} |z|={abs(top.z):.2f}, "
                          f"J=all residual {full.max_linear_residual:.1e} "
                          f"[{time.time() - t0:.0f}s]")


def test_08_cluster_signs_look_like_fair_coins():
    t0 = time.time()
    clean = sign_independence_test(6, 8, 2000, _rng("c8:clean"))
    corrupt = sign_independence_test(6, 8, 2000, _rng("c8:corrupt"), corrupt=True)
    ok = clean.passed and not corrupt.passed
    assert _report(8, ok, f"top-8 sign diagnostics clean pass / corrupted "
                          f"fail ({len(corrupt.failures)} flagged) "
                          f"[{time.time() - t0:.0f}s]")


def test_09_partial_sums_converge_in_negative_sobolev():
    t0 = time.time()
    dom = build_domain(STANDARD_SQUARE, 7)
    gop = GreenOperator(dom)
    spec = SobolevSpec(1.1, (-1.0, -1.0, 2.0))
    rng = _rng("c9")
    ladder = (0, 1, 2, 4, 8, 16, 32, 64, 128, 256)
    h = dom.mesh
    residuals = {N: [] for N in ladder}
    thresholded = []
    norms = []
    for _ in range(100):
        fld = sample_field(gop, rng)
        dec = decompose(fld, sample_openings(fld, rng))
        norms.append(math.sqrt(sobolev_norm(fld, spec)))
        for N in ladder:
            rest = Field(dom, fld.values - partial_sum(dec, fld, N).values)
            residuals[N].append(math.sqrt(sobolev_norm(rest, spec)))
        n_wide = int(np.sum(dec.diameters > 4.0 * h))
        rest = Field(dom, fld.values - partial_sum(dec, fld, n_wide).values)
        thresholded.append(math.sqrt(sobolev_norm(rest, spec)))
    med = [float(np.median(residuals[N])) for N in ladder]
    monotone = all(med[k + 1] <= med[k] for k in range(len(ladder) - 1))
    ratio = float(np.median(thresholded)) / float(np.median(norms))
    ok = monotone and ratio < 0.10
    assert _report(9, ok, f"median H^-1.1 residual nonincreasing over "
                          f"N={ladder[0]}..{ladder[-1]}, ratio at the "
                          f"4h-diameter cut {ratio:.3f} [{time.time() - t0:.0f}s]")


def test_10_plateau_height_approaches_the_gap_constant():
    t0 = time.time()
    metric = {}
    for n, M in ((6, 1200), (7, 800), (8, 500)):
        metric[n] = height_gap_statistic(n, "metric", M=M, rng=_rng(f"c10:n{n}"))
    vals = [metric[n].value for n in (6, 7, 8)]
    rel = abs(vals[2] - HEIGHT_GAP.two_lambda) / HEIGHT_GAP.two_lambda
    ok = vals[0] < vals[1] < vals[2] and rel <= 0.20
    # companion trend, reported but not gating: discrete-mode plateau and the
    # metric/discrete ratio at the finest level
    disc = height_gap_statistic(8, "discrete", M=300, rng=_rng("c10:d8"))
    rel_d = abs(disc.value - HEIGHT_GAP.lam) / HEIGHT_GAP.lam
    ratio = vals[2] / disc.value
    companion = rel_d <= 0.25 and 1.6 <= ratio <= 2.4
    assert _report(10, ok, f"metric plateau {vals[0]:.4f} < {vals[1]:.4f} < "
                           f"{vals[2]:.4f}, rel err {rel:.3f} at n=8; "
                           f"companion (non-gating) discrete {disc.value:.4f} "
                           f"rel {rel_d:.3f}, ratio {ratio:.2f} "
                           f"{'ok' if companion else 'off-trend'} "
                           f"[{time.time() - t0:.0f}s]")


def test_11_annulus_crossing_is_stable_in_the_mesh():
    t0 = time.time()
    rows6 = continuity_scan((0.3,), (0.3, 0.45, 0.6), (6,), 1000,
                            _rng("c11:n6"), check_monotone=True)
    rows8 = continuity_scan((0.3,), (0.6,), (8,), 1000,
                            _rng("c11:n8"), check_monotone=True)
    diagonal = [r.p_hat for r in rows6 if r.a == r.b][0]
    p6 = [r.p_hat for r in rows6 if r.b == 0.6][0]
    p8 = rows8[0].p_hat
    pooled = math.sqrt(p6 * (1 - p6) / 1000 + p8 * (1 - p8) / 1000)
    ok = diagonal == 1.0 and abs(p6 - p8) <= 3.0 * pooled
    assert _report(11, ok, f"degenerate annulus always crossed, per-sample "
                           f"monotone in b, |p6-p8|={abs(p6 - p8):.4f} vs "
                           f"3 s.e. {3 * pooled:.4f} [{time.time() - t0:.0f}s]")


def test_12_sign_field_obeys_arcsine_and_spin_limit():
    t0 = time.time()
    two = build_domain(DomainSpec(0.45, 0.1, (0.125, 0.0)), 2)
    gop2 = GreenOperator(two)
    worst = 0.0
    for k, rho in enumerate(np.linspace(0.1, 0.9, 9)):
        rep = sign_covariance_identity_check(gop2, 0, 1, 10**6,
                                             _rng(f"c12:rho{k}"),
                                             inject_rho=float(rho))
        worst = max(worst, abs(rep.z))
    mc = {}
    for n, M in ((5, 3000), (6, 1500), (7, 1500)):
        mc[n], se = spin_discrepancy(n, ONE, M, _rng(f"c12:n{n}"))
        if n == 5:
            se5 = se
    exact5 = spin_discrepancy_exact(GreenOperator(build_domain(STANDARD_SQUARE, 5)), ONE)
    z5 = abs(mc[5] - exact5) / se5
    ok = worst <= 3.0 and z5 <= 3.0 and mc[5] > mc[6] > mc[7]
    assert _report(12, ok, f"arcsine identity worst |z|={worst:.2f}, spin "
                           f"discrepancy MC vs exact |z|={z5:.2f}, estimates "
                           f"decrease {mc[5]:.5f} > {mc[6]:.5f} > {mc[7]:.5f} "
                           f"[{time.time() - t0:.0f}s]")


def test_13_domain_markov_residual_variances():
    t0 = time.time()
    dom = build_domain(STANDARD_SQUARE, 5)
    path, probes = default_markov_layout(dom)
    rep = markov_check(5, path, probes[:2], 500, _rng("c13"))
    ok = rep.max_abs_z <= 3.0
    assert _report(13, ok, f"conditioned-field variance vs complement Green, "
                           f"max |z|={rep.max_abs_z:.2f} over 2 probes "
                           f"[{time.time() - t0:.0f}s]")


def test_14_tail_norm_shrinks_with_component_diameter():
    t0 = time.time()
    h = 0.125
    dom = build_domain(DomainSpec(15.2 * h, 15.2 * h, (7.5 * h, 7.5 * h)), 3)
    assert dom.n_interior == 256
    gop = GreenOperator(dom)

    def block(i0, j0, side):
        return [dom.vertex_index((i0 + a, j0 + b))
                for a in range(side) for b in range(side)]

    # four levels of 64 vertices each; the max component diameter halves
    # (sides 8, 4, 2, 1) while the total vertex count stays fixed
    levels = [
        block(4, 4, 8),
        sum((block(i, j, 4) for i in (0, 12) for j in (0, 12)), []),
        sum((block(4 * i, 4 * j, 2) for i in range(4) for j in range(4)), []),
        [dom.vertex_index((2 * i, 2 * j)) for i in range(8) for j in range(8)],
    ]
    tails = [tail_norm(dom, np.array(s, dtype=np.int64), gop) for s in levels]
    empty = tail_norm(dom, np.array([], dtype=np.int64), gop)
    ok = all(tails[k] > tails[k + 1] for k in range(3)) and empty == 0.0
    assert _report(14, ok, f"tail norms {', '.join(f'{t:.2e}' for t in tails)} "
                           f"strictly decreasing, empty set -> 0 "
                           f"[{time.time() - t0:.1f}s]")


def test_15_minkowski_gauge_tracks_field_mass():
    t0 = time.time()
    dom = build_domain(STANDARD_SQUARE, 8)
    gop = GreenOperator(dom)
    h = dom.mesh
    radii = (2.0 * h, 4.0 * h, 8.0 * h)
    rng = _rng("c15")
    ratios = []
    for _ in range(10):
        fld = sample_field(gop, rng)
        dec = decompose(fld, sample_openings(fld, rng))
        ratios.extend(ratio for _, ratio in gauge_ratio(dec.clusters[0], fld, radii, ONE))
    ratios = np.array(ratios)
    within = bool(0.5 <= ratios.min() and ratios.max() <= 2.0)
    # trend report, not a gate: the asserted condition is only that the
    # gauge is well defined on every draw
    ok = np.all(np.isfinite(ratios)) and np.all(ratios > 0)
    assert _report(15, ok, f"gauge/mass ratio for the largest cluster over "
                           f"r in [2h, 8h]: [{ratios.min():.2f}, "
                           f"{ratios.max():.2f}], factor-2 window "
                           f"{'held' if within else 'missed'} (non-gating) "
                           f"[{time.time() - t0:.0f}s]")
