"""Local operator insertions as sums of product terms.

A term places 2x2 operators (and optional ket/bra derivatives) on sites
given as integer offsets from an anchor site.  The anchor sits on
sublattice A by convention; quantities anchored on B are obtained by
swapping the A and B parameters.  Matrices are in the (down, up) basis and
act as ``<s'|O|s>`` with the bra spin as row index.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .lattice import nnn_vectors, unit

OPS = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "N": np.array([[0.0, 0.0], [0.0, 1.0]]),
    "P": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "XN": np.array([[0.0, 1.0], [0.0, 0.0]]),  # sigma_x n
    "NX": np.array([[0.0, 0.0], [1.0, 0.0]]),  # n sigma_x
}
OFF_DIAGONAL = {"X", "XN", "NX"}


@dataclass(frozen=True)
class SiteOp:
    offset: tuple
    op: str = "I"
    ket_deriv: bool = False
    bra_deriv: bool = False

    @property
    def matrix(self):
        return OPS[self.op]


@dataclass(frozen=True)
class Term:
    coef: complex
    sites: tuple  # of SiteOp

    @property
    def dim(self):
        return len(self.sites[0].offset)


def _origin(D):
    return (0,) * D


def term(*sites, coef=1.0):
    return Term(complex(coef), tuple(sites))


def region(t):
    """Sites that must carry full double-layer tensors for term ``t``.

    Starts from the sites with an operator or derivative, adds the
    downstream neighbours of every off-diagonal operator (their in legs see
    non-diagonal pairs), then closes the set under directed paths so that no
    site outside the region is both downstream and upstream of it.
    """
    D = t.dim
    core = set()
    for so in t.sites:
        if so.op != "I" or so.ket_deriv or so.bra_deriv:
            core.add(tuple(so.offset))
        if so.op in OFF_DIAGONAL:
            for k in range(D):
                core.add(tuple(np.add(so.offset, unit(D, k))))
    if not core:
        core.add(_origin(D))
    pts = np.array(sorted(core))
    closed = set(core)
    for i in pts:
        for j in pts:
            if np.all(j >= i):
                for x in product(*[range(a, b + 1) for a, b in zip(i, j)]):
                    closed.add(tuple(int(c) for c in x))
    return sorted(closed)


def site_map(t):
    return {tuple(so.offset): so for so in t.sites}


def offset_parity(off):
    return sum(off) % 2


# ---------------------------------------------------------------------------
# standard insertions


def identity(D):
    return [term(SiteOp(_origin(D)))]


def number(D):
    return [term(SiteOp(_origin(D), "N"))]


def sigma_x(D):
    return [term(SiteOp(_origin(D), "X"))]


def nn_pair(D, delta):
    delta = tuple(int(c) for c in delta)
    if delta == _origin(D):
        return number(D)
    return [term(SiteOp(_origin(D), "N"), SiteOp(delta, "N"))]


def gram(D):
    """<d_a psi|d_a psi> with both derivatives on the anchor."""
    return [term(SiteOp(_origin(D), "I", True, True))]


def k_term(D):
    """<d_a psi|sigma_x_a|psi>."""
    return [term(SiteOp(_origin(D), "X", bra_deriv=True))]


def s_term(D):
    """<d_a psi|sigma_x_b|psi> with b the upstream neighbour of a along x."""
    return [term(SiteOp(unit(D, 0, -1), "X"), SiteOp(_origin(D), "I", bra_deriv=True))]


def neighbor_projector(D):
    """Product of |down><down| on all 2D neighbours of the anchor."""
    sites = [SiteOp(unit(D, k, s), "P") for k in range(D) for s in (1, -1)]
    return [term(*sites)]


def sx_p_sx(D, delta=None):
    """sigma_x_a P_ab sigma_x_b for a nearest-neighbour pair, P_ab = 1 - n_a n_b."""
    delta = unit(D, 0) if delta is None else tuple(delta)
    o = _origin(D)
    return [
        term(SiteOp(o, "X"), SiteOp(delta, "X")),
        term(SiteOp(o, "XN"), SiteOp(delta, "NX"), coef=-1.0),
    ]


def sx_sx(D, delta):
    return [term(SiteOp(_origin(D), "X"), SiteOp(tuple(delta), "X"))]


def nnn_types(D):
    """Representative NNN displacements and the number of unordered pairs of each type per site of one sublattice.

    1D: +2 (one pair per site).  D>1: e_x+e_y and e_x-e_y, each with
    C(D,2) pairs per site (axis permutations are symmetries of the ansatz).
    """
    if D == 1:
        return [((2,), 1)]
    from math import comb

    vp = tuple(unit(D, 0)[k] + unit(D, 1)[k] for k in range(D))
    vm = tuple(unit(D, 0)[k] - unit(D, 1)[k] for k in range(D))
    assert vp in nnn_vectors(D) and vm in nnn_vectors(D)
    return [(vp, comb(D, 2)), (vm, comb(D, 2))]


def axis_pair(D, r):
    """Displacement r e_x."""
    return tuple(r if k == 0 else 0 for k in range(D))
