import math

import numpy as np
import pytest
from scipy import stats

from treefire import growth
from treefire.analytics import moment_bounds, occupancy_probability, offspring_mean
from treefire.rng import StreamFamily
from treefire.topology import TreeTopology


def test_snapshot_matches_scalar_streams():
    topo = TreeTopology(2, 5)
    fam = StreamFamily(31, 2)
    snap = growth.snapshot(topo, fam, 0.8)
    for v in range(topo.vertex_count):
        expect = fam.growth_stream(v).arrival(1) <= 0.8
        assert bool(snap.occupied[v]) == expect
        assert growth.is_occupied(topo, fam, 0.8, v) == expect


def test_snapshots_nested_in_time():
    topo = TreeTopology(3, 4)
    fam = StreamFamily(7, 0)
    early = growth.snapshot(topo, fam, 0.3).occupied
    late = growth.snapshot(topo, fam, 1.1).occupied
    assert np.all(late[early])  # occupied stays occupied


def test_occupancy_marginal_and_independence():
    topo = TreeTopology(2, 9)
    t = 0.7
    occ = np.empty((400, topo.vertex_count), dtype=bool)
    for trial in range(occ.shape[0]):
        occ[trial] = growth.snapshot(topo, StreamFamily(555, trial), t).occupied
    p = occupancy_probability(t)
    est = occ.mean()
    se = math.sqrt(p * (1 - p) / occ.size)
    assert abs(est - p) < 4 * se

    # chi-square independence check on a parent/child pair across trials
    a, b = occ[:, 0], occ[:, 1]
    table = np.array(
        [
            [np.sum(a & b), np.sum(a & ~b)],
            [np.sum(~a & b), np.sum(~a & ~b)],
        ]
    )
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_cluster_of_is_maximal_connected():
    topo = TreeTopology(2, 6)
    for trial in range(20):
        snap = growth.snapshot(topo, StreamFamily(99, trial), 1.0)
        members = growth.cluster_of(snap, 0)
        if members.size == 0:
            assert not snap.occupied[0]
            continue
        member_set = set(members.tolist())
        assert 0 in member_set
        for v in member_set:
            assert snap.occupied[v]
            # connectivity: every non-root member's parent is in the cluster
            if v != 0:
                assert topo.parent(v) in member_set
        # maximality: no occupied neighbor outside the cluster
        for v in member_set:
            for w in topo.neighbors(v):
                if snap.occupied[w]:
                    assert w in member_set


def test_cluster_of_vacant_vertex_is_empty():
    topo = TreeTopology(2, 4)
    fam = StreamFamily(123, 0)
    snap = growth.snapshot(topo, fam, 0.0)
    assert growth.cluster_of(snap, 0).size == 0
    assert not growth.infinite_proxy(snap, 0)


def test_infinite_proxy_matches_definition():
    topo = TreeTopology(2, 5)
    bottom = topo.layer_start(topo.depth)
    hits = 0
    for trial in range(50):
        snap = growth.snapshot(topo, StreamFamily(202, trial), 1.2)
        members = growth.cluster_of(snap, 0)
        expect = bool(members.size and members.max() >= bottom)
        assert growth.infinite_proxy(snap, 0) == expect
        hits += expect
    assert 0 < hits < 50  # event is non-trivial at this t


def test_lazy_explorer_agrees_with_snapshot_bfs():
    r, depth, t, seed = 2, 8, 0.9, 404
    topo = TreeTopology(r, depth)
    est = growth.truncated_cluster_size_samples(seed, r, depth, t, trials=40)
    for trial in range(40):
        snap = growth.snapshot(topo, StreamFamily(seed, trial), t)
        members = growth.cluster_of(snap, 0)
        assert est.sizes[trial] == members.size
        touch = bool(members.size and members.max() >= topo.layer_start(depth))
        assert bool(est.touches[trial]) == touch


def test_mean_ratio_within_moment_bounds():
    r, t, depth = 2, 1.0, 12
    est = growth.truncated_cluster_size_samples(7, r, depth, t, trials=4000)
    lower, upper, _ = moment_bounds(r, t, depth)
    se = est.ratios.std(ddof=1) / math.sqrt(est.trials)
    assert lower - 4 * se <= est.mean_ratio <= upper + 4 * se
    cond = est.conditioned_ratios()
    assert cond.mean() > est.mean_ratio  # conditioning on reach enlarges clusters


def test_boundary_reach_frequency_subcritical_vs_supercritical():
    sub = growth.boundary_reach_frequency(5, 2, 12, 0.4, trials=4000)
    sup = growth.boundary_reach_frequency(5, 2, 12, 0.75, trials=4000)
    assert sub < 0.02
    assert 0.5 < sup < 0.85
    with pytest.raises(ValueError):
        growth.boundary_reach_frequency(5, 2, 12, 1.0, trials=10)
