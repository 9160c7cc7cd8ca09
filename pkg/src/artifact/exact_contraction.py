"""Exact contraction of <psi|O|psi> on the infinite chain and on infinite cylinders.

After the bond-dimension reduction every site carries one binary variable
(its spin, shared by ket and bra) and a factor t that depends on the
variables of its upstream neighbours.  Since sum_out t = 1 the network of t
tensors is a Markov chain that runs along the arrows, and the all-ones
vector is an exact left eigenvector with eigenvalue 1.  This is the
normalisation property.  Contractions then need the stationary distribution
of one "ring" of sites (found by power iteration) and a short slab of rings
that carries the operator insertion.

2D cylinders are cut along anti-diagonals.  Ring c holds the L sites with
x + y = c, identified under (x, y) ~ (x + L, y - L).  Every arrow goes from
ring c to ring c + 1, so no directed loop closes around the cylinder, and
one ring is a single sublattice.  The transfer matrix acts on 2^L ring
configurations.  In 1D a ring is a single site.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, eigs

from . import operators as ops
from .lattice import INFINITE, OPEN, downstream
from .tensors import amplitude_table, pair_factor, reduced_factor, site_tensor

MAX_POWER_SWEEPS = 100_000
POWER_TOL = 1e-13
KRYLOV_RESIDUAL = 1e-11
DENSE_MAX_WIDTH = 12
MEMORY_BUDGET_BYTES = 2 * 1024**3


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RingGeometry:
    """Sites (ring, k) with k in range(width); ``upstream(k)`` lists ring-(c-1) indices in leg order."""

    dim: int
    width: int

    def upstream(self, k):
        if self.dim == 1:
            return [0]
        W = self.width
        return [(k - 1) % W, k]  # in_x from (c-1, k-1), in_y from (c-1, k)

    def locate(self, offset):
        """Map a lattice offset from the anchor (ring 0, index 0) to (ring, index)."""
        if self.dim == 1:
            return int(offset[0]), 0
        dx, dy = int(offset[0]), int(offset[1])
        return dx + dy, dx % self.width


def chain():
    return RingGeometry(1, 1)


def cylinder(L):
    if L % 2 or not 4 <= L <= 14:
        raise ValueError(f"cylinder circumference must be even and in [4, 14], got {L}")
    return RingGeometry(2, L)


def _geometry(D, L):
    if D == 1:
        return chain()
    if D == 2:
        return cylinder(L)
    raise ValueError("exact contraction is available for D=1 and D=2 only")


def ring_step(vec, factors, geom):
    """Propagate a ring distribution through one ring of factors.

    vec: (B, d_0..d_{W-1}) over the previous ring.  factors[k]: (B, e_k, *in dims).
    Returns (B, e_0..e_{W-1}).
    """
    W = geom.width
    prev = list(range(1, W + 1))
    new = list(range(W + 1, 2 * W + 1))
    last_use = {}
    for k in range(W):
        for j in geom.upstream(k):
            last_use[j] = k
    cur = vec
    labels = [0] + prev
    for k in range(W):
        ups = [prev[j] for j in geom.upstream(k)]
        done = [prev[j] for j in set(geom.upstream(k)) if last_use[j] == k]
        out = [x for x in labels if x not in done] + [new[k]]
        cur = np.einsum(cur, labels, factors[k], [0, new[k]] + ups, out, optimize=False)
        labels = out
    order = [labels.index(x) for x in [0] + new]
    return np.ascontiguousarray(cur.transpose(order))


def _reduced_ring(theta, geom):
    F = reduced_factor(theta, len(geom.upstream(0)))
    return [F] * geom.width


def _stationary_1d(tA, tB):
    sA, sB = np.sin(tA / 2) ** 2, np.sin(tB / 2) ** 2
    gap = 1.0 - sA * sB
    bad = gap < 1e-14
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConvergenceError(
            f"degenerate transfer matrix at theta=({tA[k]:.6g}, {tB[k]:.6g}): eigenvalues 1 and {sA[k] * sB[k]:.16g}"
        )
    p = sB * (1.0 - sA) / gap  # probability that the site before an anchor site is up
    return np.stack([1.0 - p, p], axis=1)


def _krylov_stationary(fa, fb, geom, v0):
    """Dominant eigenvector of one two-ring sweep by ARPACK, normalized to unit sum."""
    W = geom.width
    shape = (1,) + (2,) * W

    def mv(x):
        y = ring_step(ring_step(np.real(x).reshape(shape), fa, geom), fb, geom)
        return y.ravel()

    op = LinearOperator((2**W, 2**W), matvec=mv, dtype=float)
    vals, vecs = eigs(op, k=1, which="LM", v0=v0.ravel(), tol=1e-15, maxiter=20000)
    v = np.real(vecs[:, 0])
    return (v / v.sum()).reshape((2,) * W), float(np.real(vals[0]))


def _dense_stationary(fa, fb, geom):
    """Solve (M - 1) v = 0 with sum(v) = 1 for the dense two-ring transfer matrix M."""
    W = geom.width
    n = 2**W
    basis = np.eye(n).reshape((n,) + (2,) * W)
    fa = [np.broadcast_to(f, (n,) + f.shape[1:]) for f in fa]
    fb = [np.broadcast_to(f, (n,) + f.shape[1:]) for f in fb]
    M = ring_step(ring_step(basis, fa, geom), fb, geom).reshape(n, n).T
    A = M - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(A, rhs).reshape((2,) * W)


def stationary(theta_anchor, theta_other, geom, tol=POWER_TOL, max_sweeps=MAX_POWER_SWEEPS, start=None,
               krylov_after=150):
    """Stationary ring distributions (P_before_anchor_ring, P_before_other_ring).

    P_before_anchor_ring lives on a ring of the *other* sublattice and is the
    upstream environment for an insertion whose anchor ring is next.
    Power iteration stops when the L1 change over one two-ring sweep falls
    below ``tol``.  Points that are still moving after ``krylov_after``
    sweeps (small spectral gap, near the corners of the parameter square)
    are solved directly: a dense linear solve for L <= 12, ARPACK above.
    The result is then polished by further power sweeps.  Returns (P_other, P_anchor, info);
    ``info['direct']`` marks the points that needed the direct solve.
    """
    tA = np.atleast_1d(np.asarray(theta_anchor, dtype=float))
    tB = np.atleast_1d(np.asarray(theta_other, dtype=float))
    tA, tB = np.broadcast_arrays(tA, tB)
    B, W = tA.shape[0], geom.width
    nbytes = B * 2**W * 8 * 4
    if nbytes > MEMORY_BUDGET_BYTES:
        raise MemoryError(f"ring vectors need {nbytes / 1e9:.1f} GB; reduce the batch or L")
    FA, FB = _reduced_ring(tA, geom), _reduced_ring(tB, geom)
    if W == 1:
        P = _stationary_1d(tA, tB)
        return P, ring_step(P, FA, geom), {"sweeps": np.zeros(B, dtype=int), "eigenvalue": np.ones(B),
                                           "direct": np.zeros(B, dtype=bool)}
    if start is None:
        P = np.zeros((B,) + (2,) * W)
        P[(slice(None),) + (0,) * W] = 1.0
    else:
        P = np.array(start, dtype=float).reshape((B,) + (2,) * W)
    active = np.arange(B)
    sweeps = np.zeros(B, dtype=int)
    lam = np.ones(B)
    krylov_done = np.zeros(B, dtype=bool)
    for it in range(1, max_sweeps + 1):
        if active.size == 0:
            break
        if it > krylov_after:
            for i in active[~krylov_done[active]]:
                fa = [f[i:i + 1] for f in FA]
                fb = [f[i:i + 1] for f in FB]
                if W <= DENSE_MAX_WIDTH:
                    P[i] = _dense_stationary(fa, fb, geom)
                else:
                    P[i], lam[i] = _krylov_stationary(fa, fb, geom, P[i])
                krylov_done[i] = True
        sub = P[active]
        fa = [f[active] for f in FA]
        fb = [f[active] for f in FB]
        pb = ring_step(ring_step(sub, fa, geom), fb, geom)
        norm_old = sub.reshape(active.size, -1).sum(1)
        norm_new = pb.reshape(active.size, -1).sum(1)
        lam[active] = norm_new / norm_old
        pb /= norm_new.reshape((-1,) + (1,) * W)
        diff = np.abs(pb - sub).reshape(active.size, -1).sum(1)
        P[active] = pb
        sweeps[active] = it
        # ARPACK vectors carry rounding noise of ~1e-13 summed over 2^W entries
        limit = np.where(krylov_done[active], KRYLOV_RESIDUAL, tol)
        active = active[diff >= limit]
    if active.size:
        raise ConvergenceError(
            f"power iteration did not converge for {active.size} points after {max_sweeps} sweeps"
        )
    # refresh the anchor-ring distribution from the converged other-ring one
    PA = ring_step(P, FA, geom)
    return P, PA, {"sweeps": sweeps, "eigenvalue": lam, "direct": krylov_done}


def transfer_eigenvalues_1d(theta_A, theta_B):
    """Eigenvalues of the two-site 1D transfer matrix t_A t_B: 1 and s_A s_B."""
    tA = reduced_factor(theta_A, 1)[0]  # [v, u]
    tB = reduced_factor(theta_B, 1)[0]
    # as matrices M[u, v]
    T = tA.T @ tB.T
    return np.sort(np.linalg.eigvals(T).real)[::-1]


class Environment:
    """Stationary environments for one geometry and a batch of (theta_A, theta_B)."""

    def __init__(self, theta_A, theta_B, D=1, L=10, tol=POWER_TOL, start=None):
        self.geom = _geometry(D, L)
        self.D = D
        tA = np.atleast_1d(np.asarray(theta_A, dtype=float))
        tB = np.atleast_1d(np.asarray(theta_B, dtype=float))
        self.theta_A, self.theta_B = np.broadcast_arrays(tA, tB)
        st = None if start is None else start[0]
        # P_before_A lives on a B ring
        self.P_before_A, self.P_before_B, self.info = stationary(
            self.theta_A, self.theta_B, self.geom, tol=tol, start=st
        )

    def before(self, anchor):
        return self.P_before_A if anchor == "A" else self.P_before_B

    def norm(self):
        """<psi|psi> per ring pair, i.e. the dominant transfer eigenvalue (exactly 1 analytically)."""
        return self.info["eigenvalue"]


def _slab_value(t, env, anchor, phi_A, phi_B):
    """Contract one product term against the environment."""
    geom = env.geom
    W = geom.width
    B = env.theta_A.shape[0]
    th = {"A": env.theta_A, "B": env.theta_B}
    ph = {"A": np.broadcast_to(phi_A, (B,)), "B": np.broadcast_to(phi_B, (B,))}
    other = {"A": "B", "B": "A"}
    I = ops.region(t)
    smap = ops.site_map(t)
    loc = {}
    for off in I:
        r, k = geom.locate(off)
        if (r, k) in loc.values():
            raise ValueError(f"insertion region wraps around the cylinder (width {W})")
        loc[off] = (r, k)
    by_site = {v: off for off, v in loc.items()}
    rings = [r for r, _ in loc.values()]
    r0, r1 = min(rings), max(rings)
    sub_of_ring = lambda r: anchor if r % 2 == 0 else other[anchor]
    vec = env.before(sub_of_ring(r0))
    dims = [2] * W
    for r in range(r0, r1 + 1):
        sub = sub_of_ring(r)
        factors, new_dims = [], []
        for k in range(W):
            in_dims = tuple(dims[j] for j in geom.upstream(k))
            if (r, k) in by_site:
                so = smap.get(by_site[(r, k)], ops.SiteOp(by_site[(r, k)]))
                F = pair_factor(th[sub], ph[sub], so.matrix, so.ket_deriv, so.bra_deriv, in_dims, 4)
                new_dims.append(4)
            else:
                F = reduced_factor(th[sub], len(in_dims), in_dims)
                new_dims.append(2)
            factors.append(F)
        vec = ring_step(vec, factors, geom)
        dims = new_dims
    return t.coef * vec.reshape(B, -1).sum(1)


def expect(op_terms, env, anchor="A", phi_A=0.0, phi_B=0.0):
    """<psi|O|psi> for an operator given as a list of Terms, anchored on ``anchor``."""
    total = 0.0
    for t in op_terms:
        total = total + _slab_value(t, env, anchor, phi_A, phi_B)
    return total


def expect_1d(op_terms, theta_A, theta_B, phi_A=0.0, phi_B=0.0, anchor="A"):
    env = Environment(theta_A, theta_B, D=1)
    return expect(op_terms, env, anchor, phi_A, phi_B)


def expect_2d_cylinder(op_terms, theta_A, theta_B, L=10, phi_A=0.0, phi_B=0.0, anchor="A"):
    env = Environment(theta_A, theta_B, D=2, L=L)
    return expect(op_terms, env, anchor, phi_A, phi_B)


def norm_1d_analytic(theta_A, theta_B):
    """Dominant eigenvalue of t_A t_B."""
    return transfer_eigenvalues_1d(theta_A, theta_B)[0]


def n_a_1d_analytic(theta_A, theta_B):
    sA, sB = np.sin(theta_A / 2) ** 2, np.sin(theta_B / 2) ** 2
    return sA * (1 - sB) / (1 - sA * sB)


# ---------------------------------------------------------------------------
# finite lattices


def _site_params(lat, theta, phi):
    """Expand (theta_A, theta_B)-style pairs or per-site arrays into per-site arrays."""
    sites = lat.sites()
    n = len(sites)
    par = np.array([sum(s) % 2 for s in sites])

    def expand(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return np.full(n, float(x))
        if x.shape == (2,):
            return np.where(par == 0, x[0], x[1])
        if x.shape == (n,):
            return x
        raise ValueError("parameters must be scalar, (A, B) pair, or one per site")

    return expand(theta), expand(phi)


def _in_sources(lat):
    """For each site, the index of the upstream neighbour feeding each in leg (-1 for an open edge)."""
    out = []
    for s in lat.sites():
        src = []
        for k in range(lat.dim):
            u = list(s)
            u[k] -= 1
            w = lat._wrap(u)
            src.append(-1 if w is None else lat.index(w))
        out.append(src)
    return np.array(out, dtype=int)


def configurations(n):
    return (np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1


def state_vector_small(lat, theta, phi=0.0, normalize=True):
    """Amplitudes of the ansatz on a finite lattice for all 2^N configurations.

    Uses the fact that the out legs of M equal the spin, so every bond value
    is fixed by the configuration; dangling in legs of open lattices are 0.
    Bit i of the configuration index (most significant first) is site i in
    ``lat.sites()`` order.
    """
    if lat.boundary == INFINITE:
        raise ValueError("finite lattice required")
    N = lat.n_sites
    if N > 24:
        raise ValueError(f"{N} sites is too many for a full state vector")
    th, ph = _site_params(lat, theta, phi)
    src = _in_sources(lat)
    conf = configurations(N)
    ext = np.concatenate([conf, np.zeros((conf.shape[0], 1), dtype=int)], axis=1)
    up_any = ext[:, src].max(axis=2)  # (configs, N): any upstream spin up
    z = 1 - up_any
    amp = np.ones(conf.shape[0], dtype=complex)
    for i in range(N):
        a = amplitude_table(th[i], ph[i])
        amp *= a[conf[:, i], z[:, i]]
    if normalize:
        nrm = np.linalg.norm(amp)
        if nrm == 0:
            raise ValueError("state vanishes on this lattice")
        amp = amp / nrm
    return amp


def amplitude_oracle(lat, theta, phi, config):
    """Amplitude of one configuration by brute-force summation over all virtual bond values."""
    N = lat.n_sites
    th, ph = _site_params(lat, theta, phi)
    sites = lat.sites()
    bonds = []  # (upstream site index or -1, downstream site index, axis)
    for i, s in enumerate(sites):
        for k in range(lat.dim):
            u = list(s)
            u[k] -= 1
            w = lat._wrap(u)
            bonds.append((-1 if w is None else lat.index(w), i, k))
    dangling_out = []
    if lat.boundary == OPEN:
        for i, s in enumerate(sites):
            for k in range(lat.dim):
                v = list(s)
                v[k] += 1
                if lat._wrap(v) is None:
                    dangling_out.append((i, k))
    nb = len(bonds) + len(dangling_out)
    if nb > 24:
        raise ValueError(f"{nb} bonds exceed the brute-force limit of 24")
    Ms = [site_tensor(th[i], ph[i], lat.dim) for i in range(N)]
    config = [int(c) for c in config]
    total = 0.0
    D = lat.dim
    for vals in product((0, 1), repeat=nb):
        ins = [[0] * D for _ in range(N)]
        outs = [[0] * D for _ in range(N)]
        ok = True
        for (u, d, k), x in zip(bonds, vals):
            if u < 0 and x != 0:
                ok = False
                break
            ins[d][k] = x
            if u >= 0:
                outs[u][k] = x
        if not ok:
            continue
        for (i, k), x in zip(dangling_out, vals[len(bonds):]):
            outs[i][k] = x
        w = 1.0 + 0j
        for i in range(N):
            w *= Ms[i][(config[i],) + tuple(ins[i]) + tuple(outs[i])]
            if w == 0:
                break
        total += w
    return total


def blockade_ok(lat, conf):
    """True for configurations with no two adjacent up spins."""
    conf = np.asarray(conf)
    idx = np.array([[lat.index(s), lat.index(t)] for s in lat.sites() for t in downstream(lat, s)])
    return ~np.any((conf[..., idx[:, 0]] == 1) & (conf[..., idx[:, 1]] == 1), axis=-1)


def projected_product_state_vector(lat, vartheta, varphi=0.0, normalize=True):
    """P prod_i (cos(v/2)|dn> - i e^{i varphi} sin(v/2)|up>), the projected product state."""
    N = lat.n_sites
    if N > 24:
        raise ValueError(f"{N} sites is too many for a full state vector")
    th, ph = _site_params(lat, vartheta, varphi)
    conf = configurations(N)
    amp = np.ones(conf.shape[0], dtype=complex)
    for i in range(N):
        c, s = np.cos(th[i] / 2), -1j * np.exp(1j * ph[i]) * np.sin(th[i] / 2)
        amp *= np.where(conf[:, i] == 1, s, c)
    amp = amp * blockade_ok(lat, conf)
    if normalize:
        amp = amp / np.linalg.norm(amp)
    return amp


def _class_counts(lat, conf):
    """counts[c, sub, s, z]: number of sites of sublattice ``sub`` with spin s and upstream flag z in config c."""
    src = _in_sources(lat)
    ext = np.concatenate([conf, np.zeros((conf.shape[0], 1), dtype=int)], axis=1)
    z = 1 - ext[:, src].max(axis=2)
    par = np.array([sum(st) % 2 for st in lat.sites()])
    counts = np.zeros((conf.shape[0], 2, 2, 2), dtype=int)
    for sub in (0, 1):
        for sp in (0, 1):
            for zz in (0, 1):
                counts[:, sub, sp, zz] = ((par == sub) & (conf == sp) & (z == zz)).sum(axis=1)
    return counts.reshape(conf.shape[0], 8)


def manifold_overlap_gap(lat, vartheta, varphi=(0.0, 0.0), n_starts=6, seed=0):
    """1 - max |<ansatz(theta_A, theta_B, phi_A, phi_B)|PPS>| over the ansatz parameters.

    Only blockaded configurations enter.  With two angles per lattice every
    ansatz amplitude is a product of 2x2 table entries, so it is evaluated
    from per-configuration class counts instead of rebuilding the vector.
    Returns (gap, best_params, converged).
    """
    target = projected_product_state_vector(lat, vartheta, varphi)
    conf = configurations(lat.n_sites)
    keep = blockade_ok(lat, conf)
    target = target[keep]
    counts = _class_counts(lat, conf[keep])

    def deficit(x):
        tabs = np.stack([amplitude_table(x[0], x[2]), amplitude_table(x[1], x[3])]).reshape(8)
        psi = np.prod(tabs[None, :] ** counts, axis=1)
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            return 1.0
        return 1.0 - abs(np.vdot(psi, target)) / nrm

    rng = np.random.default_rng(seed)
    vt = np.broadcast_to(np.asarray(vartheta, dtype=float), (2,))
    vp = np.broadcast_to(np.asarray(varphi, dtype=float), (2,))
    starts = [np.concatenate([vt, vp])]
    starts += [np.concatenate([rng.uniform(-np.pi, np.pi, 2), vp]) for _ in range(n_starts - 1)]
    best = None
    for x0 in starts:
        res = minimize(deficit, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000})
        res = minimize(deficit, res.x, method="BFGS", options={"gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    return max(best.fun, 0.0), best.x, bool(best.success)
