"""Exact diagonalization in the blockade-constrained Hilbert space.

Configurations are integers with site i stored in bit N-1-i, so sorting the
integers gives the same order as the full 2^N basis used by the state
vector code in ``exact_contraction``.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, expm_multiply

from .lattice import Lattice, neighbors, next_nearest, sublattice_of

BASIS_BUDGET = 5_000_000
NORM_TOL = 1e-9
DEGENERACY_GAP = 1e-10
REVIVAL_THRESHOLD = 0.1


class BudgetExceeded(MemoryError):
    pass


class NoRevival(RuntimeError):
    pass


@dataclass
class ConstrainedBasis:
    lattice: Lattice
    states: np.ndarray  # sorted int64 bitstrings
    nb_masks: np.ndarray  # neighbour mask per site
    nnn_pairs: tuple  # unordered (i, j) site-index pairs

    @property
    def n_sites(self):
        return self.lattice.n_sites

    @property
    def size(self):
        return len(self.states)

    def bit(self, i):
        return np.int64(1) << np.int64(self.n_sites - 1 - i)

    def index(self, configs):
        """Ordinals of the given bitstrings; raises if any is outside the basis."""
        configs = np.asarray(configs, dtype=np.int64)
        pos = np.searchsorted(self.states, configs)
        pos = np.minimum(pos, self.size - 1)
        if not np.all(self.states[pos] == configs):
            raise KeyError("configuration outside the constrained basis")
        return pos

    def occupations(self):
        """(size, N) array of 0/1 site occupations."""
        shifts = np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return ((self.states[:, None] >> shifts) & 1).astype(np.int8)


def _site_tables(lat):
    sites = lat.sites()
    N = len(sites)
    masks = np.zeros(N, dtype=np.int64)
    for i, s in enumerate(sites):
        for t in neighbors(lat, s):
            masks[i] |= np.int64(1) << np.int64(N - 1 - lat.index(t))
    pairs = set()
    for i, s in enumerate(sites):
        for t in next_nearest(lat, s):
            j = lat.index(t)
            pairs.add((min(i, j), max(i, j)))
    return masks, tuple(sorted(pairs))


def build_basis(lat, budget=BASIS_BUDGET):
    """All blockaded configurations, grown one site at a time.

    The partial count only grows, so the build stops as soon as it passes
    ``budget`` and reports an estimate of the full size.
    """
    if lat.n_sites > 62:
        raise BudgetExceeded(f"{lat.n_sites} sites do not fit a 64-bit configuration")
    masks, pairs = _site_tables(lat)
    N = lat.n_sites
    states = np.zeros(1, dtype=np.int64)
    for i in range(N):
        b = np.int64(1) << np.int64(N - 1 - i)
        # only neighbours already placed can be set at this point
        ok = (states & masks[i]) == 0
        states = np.concatenate([states, states[ok] | b])
        if len(states) > budget:
            growth = len(states) / max(1, len(states) - ok.sum())
            est = len(states) * growth ** (N - i - 1)
            raise BudgetExceeded(f"constrained basis exceeds {budget} states (estimated ~{est:.3g})")
    states.sort()
    return ConstrainedBasis(lat, states, masks, pairs)


def _flip_tables(basis):
    """Per site: (source ordinals, target ordinals) of the allowed PXP flips."""
    out = []
    for i in range(basis.n_sites):
        ok = (basis.states & basis.nb_masks[i]) == 0
        src = np.nonzero(ok)[0]
        dst = basis.index(basis.states[src] ^ basis.bit(i))
        out.append((src, dst))
    return out


def diagonal(basis, Delta=0.0, V=0.0):
    occ = basis.occupations()
    d = -Delta * occ.sum(1).astype(float)
    if V != 0.0 and basis.nnn_pairs:
        i, j = np.array(basis.nnn_pairs).T
        d = d + V * (occ[:, i] * occ[:, j]).sum(1)
    return d


def hamiltonian(basis, Delta=0.0, V=0.0):
    """Sparse CSR matrix of H = sum PXP - Delta sum n + V sum_NNN n n."""
    rows, cols = [], []
    for src, dst in _flip_tables(basis):
        rows.append(dst)
        cols.append(src)
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    n = basis.size
    H = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return (H + sp.diags(diagonal(basis, Delta, V))).tocsr()


class HamiltonianAction:
    """Matrix-free H v with the flip tables built once."""

    def __init__(self, basis, Delta=0.0, V=0.0):
        self.basis = basis
        self.diag = diagonal(basis, Delta, V)
        self.flips = _flip_tables(basis)

    def __call__(self, v):
        v = np.asarray(v)
        if v.shape[0] != self.basis.size:
            raise ValueError(f"vector length {v.shape[0]} does not match basis size {self.basis.size}")
        out = self.diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        for src, dst in self.flips:
            # each site's flips hit distinct targets, so fancy-index add is exact
            out[dst] += v[src]
        return out

    def operator(self):
        n = self.basis.size
        return LinearOperator((n, n), matvec=self, dtype=float)


def apply_hamiltonian(basis, v, Delta=0.0, V=0.0):
    return HamiltonianAction(basis, Delta, V)(v)


def z2_state(basis, which="A"):
    """Index vector of the configuration with sublattice ``which`` fully up."""
    N = basis.n_sites
    c = np.int64(0)
    for i, s in enumerate(basis.lattice.sites()):
        if sublattice_of(s) == which:
            c |= np.int64(1) << np.int64(N - 1 - i)
    v = np.zeros(basis.size)
    v[basis.index([c])[0]] = 1.0
    return v


def cat_state(basis):
    return (z2_state(basis, "A") + z2_state(basis, "B")) / np.sqrt(2.0)


def ground_state(basis, Delta=0.0, V=0.0, max_restarts=3, dense_below=400):
    """Lowest eigenpair.  Returns (energy, vector, info); ``info['degenerate']``
    lists the near-degenerate partner energies when the gap is below 1e-10."""
    H = hamiltonian(basis, Delta, V)
    n = basis.size
    if n <= dense_below:
        w, U = np.linalg.eigh(H.toarray())
        vals, vecs = w[:2], U[:, :2]
    else:
        ncv = None
        for attempt in range(max_restarts + 1):
            try:
                vals, vecs = eigsh(H, k=2, which="SA", tol=1e-12, ncv=ncv, maxiter=20000)
                break
            except ArpackNoConvergence:
                ncv = min(n - 1, 40 * (attempt + 2))
        else:
            raise RuntimeError(f"ground state did not converge after {max_restarts} restarts")
        o = np.argsort(vals)
        vals, vecs = vals[o], vecs[:, o]
    gap = float(vals[1] - vals[0]) if len(vals) > 1 else np.inf
    info = {"gap": gap, "degenerate": [float(x) for x in vals[1:]] if gap < DEGENERACY_GAP else []}
    return float(vals[0]), vecs[:, 0], info


def fidelity_susceptibility(basis, Deltas, V=0.0, dDelta=1e-3):
    """F(Delta) = (1 - |<GS(Delta)|GS(Delta + dDelta)>|) / dDelta^2 for each Delta."""
    out = []
    for d in np.atleast_1d(Deltas):
        _, a, _ = ground_state(basis, d, V)
        _, b, _ = ground_state(basis, d + dDelta, V)
        out.append((1.0 - abs(np.vdot(a, b))) / dDelta**2)
    return np.array(out)


def time_evolve(basis, psi0, times, Delta=0.0, V=0.0):
    """psi(t) on a uniform time grid starting at 0; returns (states, fidelity |<psi0|psi(t)>|).

    Uses the truncated-Taylor action of exp(-iHt) with its built-in error
    control (double precision).  Raises if the norm drifts by more than 1e-9.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase")
    dts = np.diff(times)
    if len(dts) and not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("times must be uniformly spaced")
    H = hamiltonian(basis, Delta, V)
    psi0 = np.asarray(psi0, dtype=complex)
    if len(times) == 1:
        states = psi0[None, :]
    else:
        states = expm_multiply(-1j * H, psi0, start=0.0, stop=times[-1], num=len(times), endpoint=True)
    norms = np.linalg.norm(states, axis=1)
    drift = float(np.max(np.abs(norms - np.linalg.norm(psi0))))
    if drift > NORM_TOL:
        raise ArithmeticError(f"norm drifted by {drift:.3g} during time evolution")
    fid = np.abs(states @ psi0.conj())
    return states, fid


def _peak(t, f, i):
    """Parabola through f[i-1], f[i], f[i+1]: (time, value) of its maximum."""
    y0, y1, y2 = f[i - 1], f[i], f[i + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return t[i] + shift * (t[i + 1] - t[i]), y1 - 0.25 * (y0 - y2) * shift


def revival_period(times, fidelity, threshold=REVIVAL_THRESHOLD):
    """Orbit period from the cat-state fidelity.

    The cat state revives twice per orbit (once at Z2', once back at Z2);
    the period is the time of the second maximum above ``threshold``.
    Maxima are located by a parabola through the grid maximum and its
    neighbours; the peak at t = 0 is skipped.  ``twice_first`` is 2x the
    first maximum, which differs from the period by the asymmetry of the
    two half orbits.
    """
    t = np.asarray(times, float)
    f = np.asarray(fidelity, float)
    peaks = []
    k = 1
    while k < len(f) - 1 and f[k] <= f[k - 1]:
        k += 1
    for i in range(max(k, 1), len(f) - 1):
        if f[i] >= f[i - 1] and f[i] > f[i + 1] and f[i] > threshold:
            peaks.append(_peak(t, f, i))
            if len(peaks) == 2:
                break
    if len(peaks) < 2:
        raise NoRevival(f"found {len(peaks)} fidelity maxima above {threshold} in t <= {t[-1]:g}, need 2")
    (t1, f1), (t2, f2) = peaks
    return {"period": float(t2), "fidelity_max": float(f2), "t_first": float(t1), "fidelity_first": float(f1),
            "twice_first": float(2 * t1)}


def revival(lat, t_max=6.0, dt=0.01, Delta=0.0, V=0.0, budget=BASIS_BUDGET):
    """Cat-state evolution on ``lat`` and the extracted period."""
    basis = build_basis(lat, budget)
    times = np.round(np.arange(0.0, t_max + dt / 2, dt), 12)
    _, fid = time_evolve(basis, cat_state(basis), times, Delta, V)
    out = revival_period(times, fid)
    out.update({"extent": list(lat.extent), "boundary": lat.boundary, "basis_size": basis.size})
    return out, times, fid


def write_series(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([f"{x:.12e}" for x in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
