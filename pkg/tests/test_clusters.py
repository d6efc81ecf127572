from collections import Counter

import pytest

from src.clusters import Bond, NablaIndex, cluster_shapes, clusters_touching, sites_touching_bond
from src.lattice import LatticePoint, diam_inf


def test_bond_between():
    assert Bond.between((1, 0), (0, 0)) == Bond(LatticePoint(0, 0), 0)
    assert Bond.between((2, 3), (2, 4)) == Bond(LatticePoint(2, 3), 1)
    with pytest.raises(ValueError):
        Bond.between((0, 0), (1, 1))


def test_bond_shift_follows_its_direction():
    b = Bond(LatticePoint(0, 0), 1)
    assert b.shift(1) == Bond(LatticePoint(0, 1), 1)
    assert b.shift(-1).endpoints == ((0, -1), (0, 0))


def test_sites_touching_bond():
    sites = sites_touching_bond(Bond(LatticePoint(0, 0), 0))
    assert len(sites) == 6
    assert set(sites) == {(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0)}


def test_cluster_shapes():
    shapes = cluster_shapes(2)
    assert len(shapes) == 10
    assert [d for _, d in shapes].count(1) == 1
    assert all(diam_inf(s) == d for s, d in shapes)
    assert cluster_shapes(0) == ()
    with pytest.raises(ValueError):
        cluster_shapes(9)


def test_clusters_touching_a_site():
    assert len(clusters_touching([(0, 0)], 1)) == 1
    found = clusters_touching([(0, 0)], 2)
    assert len(found) == 25
    assert all((0, 0) in c for c, _ in found)
    assert len({c for c, _ in found}) == len(found)


def test_clusters_touching_is_deterministic():
    a = clusters_touching([(3, 1), (0, 0)], 2)
    b = clusters_touching([(0, 0), (3, 1), (0, 0)], 2)
    assert a == b


def test_nabla_index_counts_multiplicity():
    bond = Bond(LatticePoint(0, 0), 0)
    index = NablaIndex(Counter({bond: 2, bond.shift(3): 1}))
    assert index.hits(frozenset({LatticePoint(0, 0)})) == 2
    assert index.meets(frozenset({LatticePoint(0, 0)}))
    assert not index.meets(frozenset({LatticePoint(0, 5)}))
    assert index.hits(frozenset({LatticePoint(1, 0), LatticePoint(2, 0)})) == 3
