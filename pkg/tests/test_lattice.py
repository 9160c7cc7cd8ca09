import pytest

from artifact.lattice import (Lattice, downstream, edges, neighbors, next_nearest, nnn_pairs_per_site,
                              nnn_vectors, sublattice_of, upstream)


def test_origin_is_on_A():
    assert sublattice_of((0, 0)) == "A"
    assert sublattice_of((1, 0, 0)) == "B"
    assert sublattice_of((1, 1)) == "A"


@pytest.mark.parametrize("dim,extent", [(1, (8,)), (2, (4, 4)), (3, (4, 4, 4))])
def test_periodic_coordination(dim, extent):
    lat = Lattice(dim, extent)
    for s in lat.sites():
        nb = neighbors(lat, s)
        assert len(nb) == 2 * dim
        assert all(sublattice_of(t) != sublattice_of(s) for t in nb)


def test_open_chain_ends_have_one_neighbour():
    lat = Lattice(1, (5,), "open")
    assert neighbors(lat, (0,)) == [(1,)]
    assert upstream(lat, (0,)) == []
    assert downstream(lat, (4,)) == []


def test_arrows_point_along_positive_axes():
    lat = Lattice(2, (4, 4))
    assert downstream(lat, (1, 2)) == [(2, 2), (1, 3)]
    assert upstream(lat, (0, 0)) == [(3, 0), (0, 3)]
    assert len(edges(lat)) == 2 * 16


def test_periodic_extent_must_be_even():
    with pytest.raises(ValueError):
        Lattice(1, (5,))
    with pytest.raises(ValueError):
        Lattice(4, (2, 2, 2, 2))


def test_nnn_counts():
    assert len(nnn_vectors(1)) == 2
    assert len(nnn_vectors(2)) == 4
    assert len(nnn_vectors(3)) == 12
    assert [nnn_pairs_per_site(d) for d in (1, 2, 3)] == [1, 2, 6]


def test_nnn_stay_on_the_sublattice():
    lat = Lattice(3, (4, 4, 4))
    for t in next_nearest(lat, (1, 2, 3)):
        assert sublattice_of(t) == sublattice_of((1, 2, 3))
