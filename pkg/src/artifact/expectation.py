"""Observables on the variational manifold, evaluated with one of three backends.

``exact_1d``  infinite chain, exact.
``cylinder``  infinite 2D cylinder of circumference L, exact up to finite L.
``series``    perturbative sum over q placements to a given order (any D).

All quantities are per site and anchored on one sublattice.  Angles may be
arrays; results are arrays of the broadcast shape (flattened).
"""

import numpy as np

from . import exact_contraction as ec
from . import operators as ops
from . import perturbative as pt

BACKENDS = ("exact_1d", "cylinder", "series")
IMAG_TOL = 1e-9


class BackendError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


def default_backend(D):
    return {1: "exact_1d", 2: "cylinder", 3: "series"}[D]


def check_backend(D, backend):
    if backend not in BACKENDS:
        raise BackendError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "exact_1d" and D != 1:
        raise BackendError("exact_1d backend needs D=1")
    if backend == "cylinder" and D != 2:
        raise BackendError("cylinder backend needs D=2")


class Manifold:
    """A batch of manifold points with a prepared backend.

    The contraction environment (cylinder, chain) is built once and reused
    for every insertion.
    """

    def __init__(self, theta_A, theta_B, D=1, backend=None, phi_A=0.0, phi_B=0.0, L=10, order=None):
        self.D = D
        self.backend = default_backend(D) if backend is None else backend
        check_backend(D, self.backend)
        tA = np.atleast_1d(np.asarray(theta_A, dtype=float)).ravel()
        tB = np.atleast_1d(np.asarray(theta_B, dtype=float)).ravel()
        self.theta_A, self.theta_B = np.broadcast_arrays(tA, tB)
        self.phi_A, self.phi_B = phi_A, phi_B
        self.L = L
        self.order = pt.DEFAULT_ORDER[D] if order is None else order
        self._env = None
        if self.backend != "series":
            self._env = ec.Environment(self.theta_A, self.theta_B, D=D, L=L)

    def value(self, terms, anchor="A"):
        """Complex <psi|O|psi> for a list of Terms anchored on ``anchor``."""
        if anchor not in ("A", "B"):
            raise ValueError(f"anchor must be 'A' or 'B', got {anchor!r}")
        if self.backend == "series":
            return pt.expect_series(terms, self.theta_A, self.theta_B, self.phi_A, self.phi_B,
                                    D=self.D, order=self.order, anchor=anchor)
        return ec.expect(terms, self._env, anchor, self.phi_A, self.phi_B)

    def real(self, terms, anchor="A"):
        return _real(self.value(terms, anchor))


def _real(z):
    z = np.asarray(z)
    bad = np.abs(z.imag) > IMAG_TOL * np.maximum(1.0, np.abs(z.real))
    if np.any(bad):
        raise ArithmeticError(f"expected a real observable, imaginary part {np.max(np.abs(z.imag)):.3g}")
    return z.real


def _axis_vec(D, r):
    if np.ndim(r) == 0:
        return ops.axis_pair(D, int(r))
    r = tuple(int(c) for c in r)
    if len(r) != D:
        raise ValueError(f"separation {r} does not match D={D}")
    return r


def one_point(kind, theta_A, theta_B, D=1, backend=None, anchor="A", phi_A=0.0, phi_B=0.0, **kw):
    """<n> or <sigma_x> on the anchor sublattice."""
    m = Manifold(theta_A, theta_B, D, backend, phi_A, phi_B, **kw)
    if kind == "n":
        return m.real(ops.number(D), anchor)
    if kind == "sigma_x":
        return m.real(ops.sigma_x(D), anchor)
    raise ValueError(f"one_point kind must be 'n' or 'sigma_x', got {kind!r}")


def two_point_connected(r, theta_A, theta_B, D=1, backend=None, anchor="A", manifold=None, **kw):
    """<n_i n_j> - <n_i><n_j> for j = i + r (r an integer along x, or a vector)."""
    m = Manifold(theta_A, theta_B, D, backend, **kw) if manifold is None else manifold
    delta = _axis_vec(D, r)
    if all(c == 0 for c in delta):
        raise ValueError("separation must be nonzero")
    dist = sum(abs(c) for c in delta)
    if m.backend == "series" and m.order < dist:
        raise ValueError(f"series order {m.order} is too low for separation {delta}; need order >= {dist}")
    other = "B" if anchor == "A" else "A"
    n_i = m.real(ops.number(D), anchor)
    n_j = m.real(ops.number(D), anchor if dist % 2 == 0 else other)
    nn = m.real(ops.nn_pair(D, delta), anchor)
    return nn - n_i * n_j


def correlation_length(theta_A, theta_B, D=1, backend=None, r_min=2, r_max=None, anchor="A", noise=1e-12, **kw):
    """Fit |C(r)| = a exp(-r/xi) over r in [r_min, r_max] along x.

    Returns a dict with xi, amplitude, r_squared, the separations used and
    the correlator values.  Works on a single parameter point.
    """
    if r_max is None:
        r_max = {1: 12, 2: 8, 3: 8}[D]
    m = Manifold(np.atleast_1d(theta_A)[:1], np.atleast_1d(theta_B)[:1], D, backend, **kw)
    rs = np.arange(r_min, r_max + 1)
    c = np.array([two_point_connected(int(r), None, None, D, anchor=anchor, manifold=m)[0] for r in rs])
    use = np.abs(c) > noise
    if use.sum() < 4:
        raise InsufficientData(f"only {int(use.sum())} separations above the noise floor {noise:g}")
    x, y = rs[use], np.log(np.abs(c[use]))
    slope, icpt = np.polyfit(x, y, 1)
    fit = slope * x + icpt
    ss_res = np.sum((y - fit) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    monotone = bool(np.all(np.diff(np.abs(c[use])) <= 0))
    xi = -1.0 / slope if slope < 0 else np.inf
    return {"xi": xi, "amplitude": float(np.exp(icpt)), "r_squared": float(r2), "monotone": monotone,
            "r": rs, "correlator": c}


def correlation_length_1d_exact(theta_A, theta_B):
    """xi from the subleading transfer eigenvalue of the chain: 2 / |ln(s_A s_B)| (two sites per unit cell)."""
    sA, sB = np.sin(np.asarray(theta_A) / 2) ** 2, np.sin(np.asarray(theta_B) / 2) ** 2
    with np.errstate(divide="ignore"):
        return 2.0 / np.abs(np.log(sA * sB))


def gram_element(theta_A, theta_B, D=1, backend=None, anchor="A", **kw):
    """G = <d_a psi|d_a psi> per site of the anchor sublattice."""
    return Manifold(theta_A, theta_B, D, backend, **kw).real(ops.gram(D), anchor)


def k_term(theta_A, theta_B, D=1, backend=None, anchor="A", **kw):
    """K = <d_a psi|sigma_x_a|psi> (purely imaginary at phi = 0)."""
    return Manifold(theta_A, theta_B, D, backend, **kw).value(ops.k_term(D), anchor)


def s_term(theta_A, theta_B, D=1, backend=None, anchor="A", **kw):
    """S = <d_a psi|sigma_x_b|psi> with b = a - e_x."""
    return Manifold(theta_A, theta_B, D, backend, **kw).value(ops.s_term(D), anchor)


def F_function(theta_A, theta_B, D=1, backend=None, anchor="A", **kw):
    """F with <sigma_x_a> = sin(phi_A) F(theta_A, theta_B), evaluated at phi = pi/2."""
    kw = dict(kw)
    kw["phi_A"] = kw["phi_B"] = np.pi / 2
    return Manifold(theta_A, theta_B, D, backend, **kw).real(ops.sigma_x(D), anchor)


def cross_gram_small(lat, theta, h=1e-6):
    """<d_A psi|d_B psi> / N on a finite lattice by finite differences of the explicit state vector."""
    th = np.asarray(theta, dtype=float)

    def vec(t):
        return ec.state_vector_small(lat, t, (0.0, 0.0), normalize=False)

    dA = (vec(th + [h, 0]) - vec(th - [h, 0])) / (2 * h)
    dB = (vec(th + [0, h]) - vec(th - [0, h])) / (2 * h)
    return np.vdot(dA, dB) / lat.n_sites
