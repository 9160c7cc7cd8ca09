"""Perturbative (series) backend.

Writing every reduced tensor outside the insertion region as t = p - s q
with s = sin^2(theta/2) turns <psi|O|psi> into a sum over sets J of sites
carrying a q.  A q passes an all-zero pattern forward unless its spin is
read by something downstream, so J contributes only if every q has a q or
the region immediately downstream of it.  For such J the value is

    prod_{j in J} (-s_j) * Theta(sigma)

where Theta is the insertion region contracted with its upstream
boundary.  sigma labels each boundary site as "zero" (not in J, or in J
with a q downstream: its spin is pinned down) or "free" (in J with only
region sites downstream: its spin is summed with weights +1, -1).

Counting tables store the number of sets J per (sigma, n, m), n being the
number of q's on the sublattice opposite the anchor and m on the anchor's
own sublattice.  For one-site insertions Theta does not depend on sigma and
the table collapses to the counting factors f_{n,m}.

Tables are cached on disk under ``$ARTIFACT_CACHE_DIR`` (default
``~/.cache/artifact``) as ``.npz`` files with a JSON header.
"""

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import operators as ops
from ._enumerate import grow
from .lattice import unit
from .tensors import pair_factor

CACHE_ENV = "ARTIFACT_CACHE_DIR"
CACHE_VERSION = 1
DEFAULT_ORDER = {1: 16, 2: 12, 3: 9}
MAX_ORDER = {1: 40, 2: 14, 3: 10}


def cache_dir():
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "artifact"))


@dataclass
class CountingTable:
    """Counts of admissible q placements around one insertion region."""

    dim: int
    region: tuple  # offsets of the full-tensor sites
    boundary: tuple  # offsets of the upstream boundary sites, bit order of masks
    order: int
    masks: np.ndarray  # (K,) distinct boundary masks
    counts: np.ndarray  # (K, order+1, order+1) integers: [mask, n_opp, n_same]

    def factors(self):
        """f[n, m] summed over boundary labels."""
        return self.counts.sum(axis=0)

    def row_sums(self):
        """f_k = sum_{n+m=k} f_{n,m} for k = 0..order."""
        f = self.factors()
        return np.array([sum(f[n, k - n] for n in range(k + 1)) for k in range(self.order + 1)])


def _region_key(D, region, order):
    h = hashlib.sha1(json.dumps([D, [list(r) for r in region]]).encode()).hexdigest()[:16]
    return f"d{D}_o{order}_{h}"


def _boundary(D, region):
    rset = set(region)
    out = []
    for r in region:
        for k in range(D):
            u = tuple(a - b for a, b in zip(r, unit(D, k)))
            if u not in rset and u not in out:
                out.append(u)
    return sorted(out)


def _box_graph(D, region, order):
    lo = np.min(np.array(region), axis=0) - order - 1
    hi = np.max(np.array(region), axis=0)
    shape = tuple(int(x) for x in hi - lo + 1)
    n = int(np.prod(shape))
    coords = np.array(list(np.ndindex(*shape))) + lo
    up = np.full((n, D), -1, dtype=np.int64)
    down = np.full((n, D), -1, dtype=np.int64)
    for k in range(D):
        e = np.array(unit(D, k))
        for sign, arr in ((-1, up), (1, down)):
            nb = coords + sign * e - lo
            ok = np.all((nb >= 0) & (nb < np.array(shape)), axis=1)
            arr[ok, k] = np.ravel_multi_index(tuple(nb[ok].T), shape)
    opp = (coords.sum(axis=1) % 2).astype(np.bool_)

    def index(off):
        return int(np.ravel_multi_index(tuple(np.array(off) - lo), shape))

    return up, down, opp, index, n


def enumerate_region(D, region, order, use_cache=True):
    """Counting table for an explicit region of full-tensor sites (offsets from the anchor)."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order > MAX_ORDER[D]:
        raise ValueError(f"order {order} exceeds the budget {MAX_ORDER[D]} for D={D}")
    region = tuple(sorted(tuple(int(c) for c in r) for r in region))
    path = cache_dir() / (_region_key(D, region, order) + ".npz")
    if use_cache and path.exists():
        return load_table(path)
    boundary = tuple(_boundary(D, region))
    up, down, opp, index, n = _box_graph(D, region, order)
    in_region = np.zeros(n, dtype=np.bool_)
    for r in region:
        in_region[index(r)] = True
    bsites = np.array([index(b) for b in boundary], dtype=np.int64)
    keys, vals = grow(up, down, opp, in_region, bsites, order)
    n_same = keys % (order + 1)
    n_opp = (keys // (order + 1)) % (order + 1)
    mask = keys // (order + 1) ** 2
    masks, inv = np.unique(mask, return_inverse=True)
    counts = np.zeros((len(masks), order + 1, order + 1), dtype=np.int64)
    np.add.at(counts, (inv, n_opp, n_same), vals)
    table = CountingTable(D, region, boundary, order, masks, counts)
    if use_cache:
        save_table(table, path)
    return table


def save_table(table, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": CACHE_VERSION,
        "dim": table.dim,
        "order": table.order,
        "region": [list(r) for r in table.region],
        "boundary": [list(b) for b in table.boundary],
    }
    tmp = path.with_suffix(".tmp.npz")
    np.savez_compressed(tmp, header=np.array(json.dumps(header)), masks=table.masks, counts=table.counts)
    os.replace(tmp, path)


def load_table(path):
    with np.load(path) as z:
        h = json.loads(str(z["header"]))
        if h["version"] != CACHE_VERSION:
            raise ValueError(f"cache file {path} has version {h['version']}, expected {CACHE_VERSION}")
        return CountingTable(
            h["dim"],
            tuple(tuple(r) for r in h["region"]),
            tuple(tuple(b) for b in h["boundary"]),
            h["order"],
            z["masks"],
            z["counts"],
        )


def enumerate_counting_factors(D, kind="n", order=None, use_cache=True):
    """Counting table for a standard insertion kind anchored on sublattice A.

    kind: 'n' or 'sigma_x' (one site), 'gram', 'k_term', 's_term',
    or 'nn:<dx>,<dy>,...' for a density pair.
    """
    order = DEFAULT_ORDER[D] if order is None else order
    terms = standard_terms(D, kind)
    if len(terms) != 1:
        raise ValueError(f"kind {kind!r} has several terms; use enumerate_region on each")
    return enumerate_region(D, ops.region(terms[0]), order, use_cache)


def standard_terms(D, kind):
    if kind == "n":
        return ops.number(D)
    if kind == "sigma_x":
        return ops.sigma_x(D)
    if kind == "gram":
        return ops.gram(D)
    if kind == "k_term":
        return ops.k_term(D)
    if kind == "s_term":
        return ops.s_term(D)
    if kind.startswith("nn:"):
        delta = tuple(int(x) for x in kind[3:].split(","))
        if len(delta) != D:
            raise ValueError(f"separation {delta} does not match D={D}")
        return ops.nn_pair(D, delta)
    raise ValueError(f"unknown insertion kind {kind!r}")


# ---------------------------------------------------------------------------
# evaluation


def _label_weights(table, s_opp, s_same, by_order=False):
    """W[b, (k,) mask] = sum_{n,m} C[mask,n,m] (-s_opp)^n (-s_same)^m, optionally split by total order k."""
    N = table.order
    po = (-s_opp)[:, None] ** np.arange(N + 1)  # (B, N+1)
    ps = (-s_same)[:, None] ** np.arange(N + 1)
    C = table.counts.astype(float)
    if not by_order:
        return np.einsum("knm,bn,bm->bk", C, po, ps)
    out = np.zeros((s_opp.shape[0], N + 1, C.shape[0]))
    for n in range(N + 1):
        for m in range(N + 1 - n):
            out[:, n + m] += po[:, n, None] * ps[:, m, None] * C[None, :, n, m]
    return out


def _theta_contract(term, table, th, ph, weights):
    """Contract the insertion region with boundary weights.

    weights: (B, K) over the table masks.  th/ph: dicts sublattice -> (B,)
    arrays where 'A' is the anchor sublattice.
    """
    D = table.dim
    region = table.region
    boundary = table.boundary
    nb = len(boundary)
    B = weights.shape[0]
    # dense label tensor over boundary sites; bit i of the mask is boundary[i]
    Wd = np.zeros((B, 2**nb))
    Wd[:, table.masks] = weights
    # C order puts the most significant bit first: axis j is boundary[nb - 1 - j]
    Wd = Wd.reshape((B,) + (2,) * nb)
    # transform labels (zero, free) into reduced spin values (0 -> 00, 1 -> 11)
    Lmat = np.array([[1.0, 0.0], [1.0, -1.0]])
    for i in range(nb):
        Wd = np.moveaxis(np.tensordot(Wd, Lmat, axes=([1 + i], [0])), -1, 1 + i)
    smap = ops.site_map(term)
    var = {}
    for i, r in enumerate(region):
        var[r] = 1 + i
    for i, b in enumerate(boundary):
        var[b] = 1 + len(region) + i
    operands = [Wd, [0] + [var[b] for b in reversed(boundary)]]
    for r in region:
        sub = "A" if sum(r) % 2 == 0 else "B"
        ups = [tuple(a - c for a, c in zip(r, unit(D, k))) for k in range(D)]
        in_dims = tuple(2 if u in boundary else 4 for u in ups)
        so = smap.get(r, ops.SiteOp(r))
        F = pair_factor(th[sub], ph[sub], so.matrix, so.ket_deriv, so.bra_deriv, in_dims, 4)
        operands += [F, [0, var[r]] + [var[u] for u in ups]]
    return np.einsum(*operands, [0], optimize="greedy")


def _anchor_params(theta_A, theta_B, phi_A, phi_B, anchor):
    tA = np.atleast_1d(np.asarray(theta_A, dtype=float))
    tB = np.atleast_1d(np.asarray(theta_B, dtype=float))
    tA, tB = np.broadcast_arrays(tA, tB)
    B = tA.shape[0]
    pA = np.broadcast_to(np.asarray(phi_A, dtype=float), (B,))
    pB = np.broadcast_to(np.asarray(phi_B, dtype=float), (B,))
    if anchor == "B":
        tA, tB, pA, pB = tB, tA, pB, pA
    return {"A": tA, "B": tB}, {"A": pA, "B": pB}


def _chunks(B, nb):
    size = max(1, int(4_000_000 // max(1, 2**nb)))
    return [slice(i, min(B, i + size)) for i in range(0, B, size)]


def expect_series(op_terms, theta_A, theta_B, phi_A=0.0, phi_B=0.0, D=2, order=None, anchor="A", use_cache=True):
    """<psi|O|psi> summed to ``order`` q's for an operator given as a list of Terms."""
    order = DEFAULT_ORDER[D] if order is None else order
    th, ph = _anchor_params(theta_A, theta_B, phi_A, phi_B, anchor)
    s = {k: np.sin(v / 2) ** 2 for k, v in th.items()}
    B = th["A"].shape[0]
    total = np.zeros(B, dtype=complex)
    for t in op_terms:
        table = enumerate_region(D, ops.region(t), order, use_cache)
        for sl in _chunks(B, len(table.boundary)):
            W = _label_weights(table, s["B"][sl], s["A"][sl])
            val = _theta_contract(t, table, {k: v[sl] for k, v in th.items()}, {k: v[sl] for k, v in ph.items()}, W)
            total[sl] += t.coef * val
    return total


def partial_sums_terms(op_terms, theta_A, theta_B, phi_A=0.0, phi_B=0.0, D=2, order=None, anchor="A", use_cache=True):
    """Partial sums S_0..S_order, shape (B, order+1)."""
    order = DEFAULT_ORDER[D] if order is None else order
    th, ph = _anchor_params(theta_A, theta_B, phi_A, phi_B, anchor)
    s = {k: np.sin(v / 2) ** 2 for k, v in th.items()}
    B = th["A"].shape[0]
    out = np.zeros((B, order + 1), dtype=complex)
    for t in op_terms:
        table = enumerate_region(D, ops.region(t), order, use_cache)
        step = max(1, 4_000_000 // (2 ** len(table.boundary) * (order + 1)))
        for i0 in range(0, B, step):
            sl = slice(i0, min(B, i0 + step))
            nB = sl.stop - sl.start
            W = _label_weights(table, s["B"][sl], s["A"][sl], by_order=True)  # (nB, N+1, K)
            rep = lambda x: np.repeat(x[sl], order + 1)
            val = _theta_contract(t, table, {k: rep(v) for k, v in th.items()}, {k: rep(v) for k, v in ph.items()},
                                  W.reshape(nB * (order + 1), -1))
            out[sl] += t.coef * val.reshape(nB, order + 1)
    return np.cumsum(out, axis=1)


def series_sum(table, theta_A, theta_B, order=None):
    """Sigma = sum_{n,m} (-1)^{n+m} f_{n,m} s_opp^n s_anchor^m for a one-site table."""
    order = table.order if order is None else order
    if order > table.order:
        raise ValueError(f"table only covers order {table.order}")
    return partial_sums(table, theta_A, theta_B)[..., order]


def partial_sums(table, theta_A, theta_B):
    """S_0..S_N of the counting-factor series, anchored on A."""
    sA = np.sin(np.asarray(theta_A, dtype=float) / 2) ** 2
    sB = np.sin(np.asarray(theta_B, dtype=float) / 2) ** 2
    sA, sB = np.broadcast_arrays(sA, sB)
    f = table.factors().astype(float)
    N = table.order
    terms = np.zeros(sA.shape + (N + 1,))
    for n in range(N + 1):
        for m in range(N + 1 - n):
            terms[..., n + m] += f[n, m] * (-sB) ** n * (-sA) ** m
    return np.cumsum(terms, axis=-1)


def regime_map(theta_A, theta_B, D=2, order=None, threshold=1e-3, kind="n"):
    """Boolean mask |S_N - S_{N-1}| < threshold and the increment field on a grid of angles.

    The increment is that of <n> anchored on each sublattice (maximum of the two).
    """
    order = DEFAULT_ORDER[D] if order is None else order
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    terms = standard_terms(D, kind)
    tA, tB = np.broadcast_arrays(np.asarray(theta_A, float), np.asarray(theta_B, float))
    shape = tA.shape
    inc = np.zeros(tA.size)
    for anchor in ("A", "B"):
        S = partial_sums_terms(terms, tA.ravel(), tB.ravel(), D=D, order=order, anchor=anchor)
        inc = np.maximum(inc, np.abs(S[:, order] - S[:, order - 1]))
    inc = inc.reshape(shape)
    return inc < threshold, inc


def superexponential_check(table, k_max=None):
    """Check f_{k+1} > sqrt(k) f_k for every k in 1..k_max-1 where f_k > 0.

    Returns (holds, list of (k, f_k, f_{k+1}, ratio)).
    """
    f = table.row_sums()
    k_max = table.order if k_max is None else min(k_max, table.order)
    if k_max < 4:
        raise ValueError("need a table through order 4 at least")
    rows = []
    holds = True
    for k in range(1, k_max):
        if f[k] == 0:
            continue
        ok = f[k + 1] > np.sqrt(k) * f[k]
        holds &= bool(ok)
        rows.append((k, int(f[k]), int(f[k + 1]), float(f[k + 1] / f[k])))
    return holds, rows


def brute_force_counts(D, region, order):
    """Reference enumerator: breadth-first growth of q sets with deduplication as frozensets.

    Independent of the kernel; practical up to order ~10 in 2D.
    Returns {(mask, n_opp, n_same): count}.
    """
    region = [tuple(r) for r in region]
    rset = set(region)
    boundary = _boundary(D, region)
    ups = lambda x: [tuple(a - b for a, b in zip(x, unit(D, k))) for k in range(D)]
    downs = lambda x: [tuple(a + b for a, b in zip(x, unit(D, k))) for k in range(D)]
    level = {frozenset()}
    out = {}
    for size in range(order + 1):
        for J in level:
            for j in J:
                assert any(d in J or d in rset for d in downs(j)), "q without a downstream partner"
            mask = 0
            for i, b in enumerate(boundary):
                if b in J and not any(d in J for d in downs(b)):
                    mask |= 1 << i
            n_opp = sum(sum(j) % 2 for j in J)
            key = (mask, n_opp, size - n_opp)
            out[key] = out.get(key, 0) + 1
        if size == order:
            break
        nxt = set()
        for J in level:
            for x in list(J) + region:
                for u in ups(x):
                    if u not in rset and u not in J:
                        nxt.add(J | {u})
        level = nxt
    return out
