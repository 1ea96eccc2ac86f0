"""Distance transforms and the gauged neighborhood measure."""

import math

import numpy as np
import pytest

from gfflab.lattice import DomainSpec, Field, GreenOperator, STANDARD_SQUARE, build_domain, sample_field
from gfflab.metric import sample_openings
from gfflab.excursions import decompose, decompose_discrete
from gfflab.minkowski import distance_transform, gauge_ratio, minkowski_measure

H = 0.25


def _block_domain():
    return build_domain(DomainSpec.square(0.7, (0.25, 0.25)), 2)


def _corner_cluster(dom):
    """Discrete decomposition whose rank-1 cluster is the singleton (2, 2)."""
    vals = np.ones(dom.n_interior)
    vals[dom.vertex_index((2, 2))] = -1.0
    d = decompose_discrete(Field(dom, vals))
    assert d.clusters[1].vertices.tolist() == [dom.vertex_index((2, 2))]
    return Field(dom, vals), d


def test_distance_transform_singleton_exact():
    dom = _block_domain()
    _, d = _corner_cluster(dom)
    dist = distance_transform(d.clusters[1], dom)
    ij = dom.interior_ij
    expect = H * np.hypot(ij[:, 0] - 2, ij[:, 1] - 2)
    assert np.allclose(dist.values, expect, atol=1e-12)
    assert dist.domain is dom


def test_distance_transform_zero_on_members():
    gop = GreenOperator(build_domain(STANDARD_SQUARE, 4))
    rng = np.random.default_rng(2)
    fld = sample_field(gop, rng)
    d = decompose(fld, sample_openings(fld, rng))
    c = d.clusters[0]
    dist = distance_transform(c, fld.domain)
    assert np.allclose(dist.values[c.vertices], 0.0, atol=0.0)
    others = np.setdiff1d(np.arange(fld.domain.n_interior), c.vertices)
    assert (dist.values[others] >= fld.domain.mesh - 1e-12).all()


def test_distance_transform_rejects_empty():
    dom = _block_domain()
    _, d = _corner_cluster(dom)
    c = d.clusters[1]
    c.vertices = np.empty(0, dtype=np.int64)
    with pytest.raises(ValueError, match="empty"):
        distance_transform(c, dom)


def test_minkowski_measure_hand_count():
    dom = _block_domain()
    _, d = _corner_cluster(dom)
    c = d.clusters[1]
    # r = 1.5h captures (2,2), (1,2), (2,1) and (1,1) at distance h*sqrt(2)
    r = 1.5 * H
    val = minkowski_measure(c, dom, r, lambda x, y: 1.0)
    assert val == pytest.approx(0.5 * math.sqrt(abs(math.log(r))) * H * H * 4, rel=1e-12)
    # r just below h keeps only the cluster vertex itself
    r = 0.9 * H
    val = minkowski_measure(c, dom, r, lambda x, y: 1.0)
    assert val == pytest.approx(0.5 * math.sqrt(abs(math.log(r))) * H * H * 1, rel=1e-12)


def test_minkowski_measure_reuses_distances():
    dom = _block_domain()
    _, d = _corner_cluster(dom)
    c = d.clusters[1]
    dist = distance_transform(c, dom)
    a = minkowski_measure(c, dom, 0.3, lambda x, y: 1.0)
    b = minkowski_measure(c, dom, 0.3, lambda x, y: 1.0, distances=dist)
    assert a == b


@pytest.mark.parametrize("r", [0.0, 1.0, -0.5, 2.0])
def test_minkowski_measure_rejects_bad_radius(r):
    dom = _block_domain()
    _, d = _corner_cluster(dom)
    with pytest.raises(ValueError, match="r must lie"):
        minkowski_measure(d.clusters[1], dom, r, lambda x, y: 1.0)


def test_neighborhood_grows_with_radius():
    gop = GreenOperator(build_domain(STANDARD_SQUARE, 4))
    rng = np.random.default_rng(6)
    fld = sample_field(gop, rng)
    d = decompose(fld, sample_openings(fld, rng))
    c = d.clusters[0]
    prev = -1.0
    for r in (0.05, 0.1, 0.2, 0.4):
        raw = minkowski_measure(c, fld.domain, r, lambda x, y: 1.0)
        raw /= 0.5 * math.sqrt(abs(math.log(r)))
        assert raw >= prev
        prev = raw


def test_gauge_ratio_table():
    gop = GreenOperator(build_domain(STANDARD_SQUARE, 5))
    rng = np.random.default_rng(3)
    fld = sample_field(gop, rng)
    d = decompose(fld, sample_openings(fld, rng))
    c = d.clusters[0]
    h = fld.domain.mesh
    r_list = [2 * h, 4 * h, 8 * h]
    res = gauge_ratio(c, fld, r_list, lambda x, y: 1.0)
    assert res.field_mass == pytest.approx(c.mass, rel=1e-12)
    assert [r for r, _ in res] == r_list
    for (r, ratio), mink in zip(res.rows, res.minkowski):
        assert ratio == pytest.approx(mink / res.field_mass, rel=1e-12)
        assert 0.0 < ratio < 100.0
    assert res.in_window == [2 * h <= r <= c.diameter / 4 for r in r_list]
    assert not res.sub_resolution


def test_gauge_ratio_flags_singleton():
    dom = _block_domain()
    fld, d = _corner_cluster(dom)
    res = gauge_ratio(d.clusters[1], fld, [0.3], lambda x, y: 1.0)
    assert res.sub_resolution
    assert res.in_window == [False]


def test_gauge_ratio_rejects_zero_mass():
    dom = _block_domain()
    fld, d = _corner_cluster(dom)
    with pytest.raises(ValueError, match="zero field mass"):
        gauge_ratio(d.clusters[1], fld, [0.3], lambda x, y: 0.0)
