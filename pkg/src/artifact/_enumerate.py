"""Numba kernel that enumerates admissible q placements around an insertion region."""

import numpy as np
from numba import njit, types
from numba.typed import Dict


@njit(cache=True)
def _record(counts, inJ, down, bsites, n_opp, n_same, order):
    mask = 0
    for i in range(bsites.shape[0]):
        b = bsites[i]
        if inJ[b]:
            free = True
            for d in range(down.shape[1]):
                w = down[b, d]
                if w >= 0 and inJ[w]:
                    free = False
                    break
            if free:
                mask |= 1 << i
    key = (mask * (order + 1) + n_opp) * (order + 1) + n_same
    if key in counts:
        counts[key] += 1
    else:
        counts[key] = 1


@njit(cache=True)
def grow(up, down, opp, in_region, bsites, order):
    """Redelmeier-style growth of q sets by upstream steps from the region.

    Every set in which each q has a downstream neighbour in the set or in
    the region is produced exactly once.  Returns a dict keyed by
    ``(mask * (order+1) + n_opp) * (order+1) + n_same`` where bit i of mask
    marks boundary site ``bsites[i]`` as a q with no downstream q.
    """
    n, D = up.shape
    counts = Dict.empty(key_type=types.int64, value_type=types.int64)
    seen = in_region.copy()
    inJ = np.zeros(n, dtype=np.bool_)
    nb = bsites.shape[0]
    for i in range(nb):
        seen[bsites[i]] = True
    cap = nb + order * D + 1
    U = np.empty((order + 1, cap), dtype=np.int64)
    ulen = np.zeros(order + 1, dtype=np.int64)
    pos = np.zeros(order + 1, dtype=np.int64)
    added = np.empty((order + 1, D), dtype=np.int64)
    nadded = np.zeros(order + 1, dtype=np.int64)
    chosen = np.empty(order + 1, dtype=np.int64)
    for i in range(nb):
        U[0, i] = bsites[i]
    ulen[0] = nb
    n_opp = 0
    n_same = 0
    _record(counts, inJ, down, bsites, 0, 0, order)
    level = 0
    while level >= 0:
        if level < order and pos[level] < ulen[level]:
            v = U[level, pos[level]]
            pos[level] += 1
            inJ[v] = True
            chosen[level] = v
            if opp[v]:
                n_opp += 1
            else:
                n_same += 1
            L = 0
            for i in range(pos[level], ulen[level]):
                U[level + 1, L] = U[level, i]
                L += 1
            na = 0
            for d in range(D):
                u = up[v, d]
                if u >= 0 and not seen[u]:
                    seen[u] = True
                    U[level + 1, L] = u
                    L += 1
                    added[level, na] = u
                    na += 1
            nadded[level] = na
            ulen[level + 1] = L
            pos[level + 1] = 0
            _record(counts, inJ, down, bsites, n_opp, n_same, order)
            level += 1
        else:
            level -= 1
            if level < 0:
                break
            v = chosen[level]
            inJ[v] = False
            if opp[v]:
                n_opp -= 1
            else:
                n_same -= 1
            for i in range(nadded[level]):
                seen[added[level, i]] = False
    keys = np.empty(len(counts), dtype=np.int64)
    vals = np.empty(len(counts), dtype=np.int64)
    i = 0
    for k, c in counts.items():
        keys[i] = k
        vals[i] = c
        i += 1
    return keys, vals
