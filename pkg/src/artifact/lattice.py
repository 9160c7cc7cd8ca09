"""Hypercubic lattices with the bipartition and arrow orientation used by the ansatz.

All arrows point along +x, +y, +z.  A site is on sublattice A when its
coordinate sum is even (the origin is on A).
"""

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

PERIODIC = "periodic"
OPEN = "open"
INFINITE = "infinite"


@dataclass(frozen=True)
class Lattice:
    """A D-dimensional hypercubic lattice.

    ``extent`` is ignored for the infinite (translation invariant) lattice,
    where coordinates are unbounded integers.
    """

    dim: int
    extent: tuple = ()
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.boundary not in (PERIODIC, OPEN, INFINITE):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.boundary == INFINITE:
            return
        ext = tuple(int(e) for e in self.extent)
        if len(ext) != self.dim:
            raise ValueError(f"need {self.dim} extents, got {len(ext)}")
        if any(e < 1 for e in ext):
            raise ValueError("extents must be positive")
        if self.boundary == PERIODIC and any(e % 2 for e in ext):
            raise ValueError(f"periodic extents must be even for a bipartition, got {ext}")
        object.__setattr__(self, "extent", ext)

    @property
    def n_sites(self):
        if self.boundary == INFINITE:
            raise ValueError("infinite lattice has no finite site count")
        return int(np.prod(self.extent))

    def sites(self):
        """All sites in row-major (C) order; the first axis varies slowest."""
        if self.boundary == INFINITE:
            raise ValueError("cannot list the sites of an infinite lattice")
        return [tuple(s) for s in product(*[range(e) for e in self.extent])]

    def index(self, site):
        check_site(self, site)
        return int(np.ravel_multi_index(tuple(site), self.extent))

    def _wrap(self, site):
        """Apply the boundary condition; returns None when the site falls off an open edge."""
        site = tuple(int(c) for c in site)
        if self.boundary == INFINITE:
            return site
        if self.boundary == PERIODIC:
            return tuple(c % e for c, e in zip(site, self.extent))
        if all(0 <= c < e for c, e in zip(site, self.extent)):
            return site
        return None


def check_site(lat, site):
    site = tuple(site)
    if len(site) != lat.dim:
        raise ValueError(f"site {site} has wrong dimension for a {lat.dim}D lattice")
    if lat.boundary != INFINITE:
        for c, e in zip(site, lat.extent):
            if not 0 <= c < e:
                raise ValueError(f"site {site} outside extents {lat.extent}")
    return site


def unit(dim, axis, sign=1):
    v = [0] * dim
    v[axis] = sign
    return tuple(v)


def add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def sublattice_of(site, lat=None):
    """'A' for even coordinate sum, 'B' otherwise."""
    if lat is not None:
        check_site(lat, site)
    return "A" if sum(site) % 2 == 0 else "B"


def _shifted(lat, site, vectors):
    site = check_site(lat, site)
    out = []
    for v in vectors:
        s = lat._wrap(add(site, v))
        if s is not None:
            out.append(s)
    return out


def downstream(lat, site):
    """Neighbours reached by following an arrow out of ``site`` (one per axis)."""
    return _shifted(lat, site, [unit(lat.dim, k) for k in range(lat.dim)])


def upstream(lat, site):
    """Neighbours whose arrows point into ``site``."""
    return _shifted(lat, site, [unit(lat.dim, k, -1) for k in range(lat.dim)])


def neighbors(lat, site):
    """Nearest neighbours, upstream first.  Duplicates (extent 2) are kept once."""
    out = []
    for s in upstream(lat, site) + downstream(lat, site):
        if s not in out and s != tuple(site):
            out.append(s)
    return out


def nnn_vectors(dim):
    """Displacements to next-nearest neighbours.

    Distance 2 along the chain in 1D, the face diagonals (distance sqrt 2)
    otherwise.
    """
    if dim == 1:
        return [(2,), (-2,)]
    vecs = []
    for i, j in combinations(range(dim), 2):
        for si, sj in product((1, -1), repeat=2):
            v = [0] * dim
            v[i], v[j] = si, sj
            vecs.append(tuple(v))
    return vecs


def next_nearest(lat, site):
    out = []
    for s in _shifted(lat, site, nnn_vectors(lat.dim)):
        if s not in out and s != tuple(site):
            out.append(s)
    return out


def nnn_pairs_per_site(dim):
    """Number of unordered NNN pairs per site: 1, 2 and 6 in 1D, 2D, 3D."""
    return len(nnn_vectors(dim)) // 2


def edges(lat):
    """Directed nearest-neighbour edges (upstream, downstream) of a finite lattice."""
    out = []
    for s in lat.sites():
        for t in downstream(lat, s):
            out.append((s, t))
    return out
