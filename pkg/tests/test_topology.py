import random

import numpy as np
import pytest

from treefire.topology import TreeTopology, tree_vertex_count


def test_vertex_count_closed_form():
    assert tree_vertex_count(2, 0) == 1
    assert tree_vertex_count(2, 3) == 15
    assert tree_vertex_count(3, 2) == 13
    topo = TreeTopology(2, 10)
    assert topo.vertex_count == 2**11 - 1


def test_layer_blocks():
    topo = TreeTopology(3, 4)
    total = 0
    for g in range(5):
        assert topo.layer_start(g) == total
        total += topo.layer_size(g)
    assert total == topo.vertex_count


def test_parent_child_inverse():
    rng = random.Random(7)
    for r in (2, 3, 5):
        topo = TreeTopology(r, 6)
        for _ in range(200):
            v = rng.randrange(1, topo.vertex_count)
            p = topo.parent(v)
            assert v in topo.children(p)
            assert topo.generation(v) == topo.generation(p) + 1
        for _ in range(100):
            v = rng.randrange(0, topo.layer_start(topo.depth))
            kids = topo.children(v)
            assert len(kids) == r
            assert all(topo.parent(c) == v for c in kids)


def test_boundary_and_leaves():
    topo = TreeTopology(2, 3)
    for v in range(topo.vertex_count):
        assert topo.is_boundary(v) == (topo.generation(v) == 3)
        if topo.is_boundary(v):
            assert topo.children(v) == []


def test_neighbors_symmetric():
    topo = TreeTopology(2, 4)
    for v in range(topo.vertex_count):
        for u in topo.neighbors(v):
            assert v in topo.neighbors(u)


def test_is_ancestor():
    topo = TreeTopology(2, 5)
    assert topo.is_ancestor(0, 37)
    assert topo.is_ancestor(5, 5)
    v = 44
    anc = [v]
    while v > 0:
        v = topo.parent(v)
        anc.append(v)
    for a in anc:
        assert topo.is_ancestor(a, 44)
    assert not topo.is_ancestor(44, anc[1])


def test_generations_array_matches_scalar():
    topo = TreeTopology(3, 5)
    gens = topo.generations_array()
    idx = np.random.default_rng(0).integers(0, topo.vertex_count, 300)
    for v in idx:
        assert gens[v] == topo.generation(int(v))


def test_label_width_cap():
    with pytest.raises(ValueError):
        TreeTopology(2, 64)
    TreeTopology(2, 61)  # still within the 63-bit budget


def test_validation():
    with pytest.raises(ValueError):
        TreeTopology(1, 3)
    with pytest.raises(ValueError):
        TreeTopology(2, -1)
    topo = TreeTopology(2, 2)
    with pytest.raises(ValueError):
        topo.parent(0)
    with pytest.raises(ValueError):
        topo.generation(topo.vertex_count)
