"""Variational ground states of the PXP model with detuning and NNN coupling.

H = sum_i P X_i P - Delta sum_i n_i + V sum_<<ij>> n_i n_j  (Omega = 1)

evaluated on the manifold at phi_A = phi_B = pi/2, where the state is real.
The energy per site splits into three Delta/V independent pieces,

    E/N = F - Delta * n + V * nnn

with F the averaged <sigma_x>, n the averaged density and nnn the NNN
pair density per site.  Those pieces are tabulated once on the seed grid
and reused by every minimization.
"""

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize as sp_minimize, minimize_scalar

from . import exact_contraction as ec
from . import operators as ops
from . import perturbative as pt
from .expectation import Manifold, correlation_length, default_backend

GRID_SIZE = 60
NM_TOL = 1e-8
JUMP_THRESHOLD = 0.05
DELTA_STEP = 1e-3
ORDER_EPS = 1e-11  # energy gain of the broken-symmetry minimum that counts as ordered
REGIME_THRESHOLD = 1e-3
SPLIT_NUDGE = 0.05
CSV_COLUMNS = ["D", "Delta", "V", "thetaA", "thetaB", "energy_per_site", "order_parameter", "order_tag", "xi"]


class RegimeError(ValueError):
    """A series-backend evaluation outside the convergence regime."""


class NoTransition(RuntimeError):
    pass


@dataclass
class PhasePoint:
    D: int
    Delta: float
    V: float
    theta_A: float
    theta_B: float
    energy: float
    order_parameter: float
    order_tag: str = ""
    xi: float = float("nan")
    restarts: int = 0
    flags: list = field(default_factory=list)

    @property
    def pair(self):
        """Both degenerate minima (the second is the sublattice exchange of the first)."""
        a, b = self.theta_A, self.theta_B
        return ((a, b), (b, a)) if a != b else ((a, b),)

    def row(self):
        return [self.D, self.Delta, self.V, self.theta_A, self.theta_B, self.energy, self.order_parameter,
                self.order_tag, self.xi]


def _backend(D, backend):
    return default_backend(D) if backend is None else backend


def energy_components(theta_A, theta_B, D=1, backend=None, L=10, order=None, anchors=False):
    """(F, n, nnn) per site as arrays; with ``anchors`` also (n_A, n_B)."""
    m = Manifold(theta_A, theta_B, D, _backend(D, backend), np.pi / 2, np.pi / 2, L=L, order=order)
    F = 0.5 * (m.real(ops.sigma_x(D), "A") + m.real(ops.sigma_x(D), "B"))
    nA, nB = m.real(ops.number(D), "A"), m.real(ops.number(D), "B")
    nnn = 0.0
    for delta, mult in ops.nnn_types(D):
        nnn = nnn + 0.5 * mult * (m.real(ops.nn_pair(D, delta), "A") + m.real(ops.nn_pair(D, delta), "B"))
    if anchors:
        return F, 0.5 * (nA + nB), nnn, nA, nB
    return F, 0.5 * (nA + nB), nnn


def _in_regime(theta_A, theta_B, D, order):
    ok, _ = pt.regime_map(np.atleast_1d(theta_A), np.atleast_1d(theta_B), D=D, order=order,
                          threshold=REGIME_THRESHOLD)
    return ok


def energy_per_site(theta_A, theta_B, Delta=0.0, V=0.0, D=1, backend=None, L=10, order=None, check_regime=True):
    """E/N = (1/2)[F(A,B) + F(B,A)] - (Delta/2)(n_A + n_B) + V * (NNN pairs per site)."""
    backend = _backend(D, backend)
    if backend == "series" and check_regime:
        order_ = pt.DEFAULT_ORDER[D] if order is None else order
        if not np.all(_in_regime(theta_A, theta_B, D, order_)):
            raise RegimeError("energy requested outside the series convergence regime")
    F, n, nnn = energy_components(theta_A, theta_B, D, backend, L, order)
    return F - Delta * n + V * nnn


def order_parameter(n_A, n_B):
    """|<sigma_z_A> - <sigma_z_B>| with sigma_z = 2n - 1."""
    return float(abs(2.0 * (n_A - n_B)))


def seed_angles(n=GRID_SIZE):
    """Cell centres of an n x n grid on [-pi, pi)^2 (the corners themselves are singular)."""
    return -np.pi + (np.arange(n) + 0.5) * 2 * np.pi / n


def _cache_path(D, backend, L, order, n):
    root = os.environ.get(pt.CACHE_ENV, os.path.join(os.path.expanduser("~"), ".cache", "artifact"))
    key = json.dumps({"D": D, "backend": backend, "L": L, "order": order, "n": n, "v": 1}, sort_keys=True)
    return os.path.join(root, "energy_grid_" + hashlib.sha1(key.encode()).hexdigest()[:16] + ".npz")


def component_grid(D=1, backend=None, L=10, order=None, n=GRID_SIZE, use_cache=True, chunk=200):
    """Energy pieces on the seed grid, shape (3, n, n) indexed [piece, i_A, i_B].

    Only theta_A >= theta_B is evaluated; the rest follows from the exchange
    symmetry.  Series points outside the regime are set to NaN.
    """
    backend = _backend(D, backend)
    order = pt.DEFAULT_ORDER[D] if order is None else order
    path = _cache_path(D, backend, L if backend == "cylinder" else None, order if backend == "series" else None, n)
    if use_cache and os.path.exists(path):
        with np.load(path) as z:
            return z["theta"], z["comp"]
    th = seed_angles(n)
    iA, iB = np.tril_indices(n)
    comp = np.full((3, n, n), np.nan)
    for s in range(0, iA.size, chunk):
        a, b = th[iA[s:s + chunk]], th[iB[s:s + chunk]]
        vals = np.array(energy_components(a, b, D, backend, L, order))
        if backend == "series":
            vals[:, ~_in_regime(a, b, D, order)] = np.nan
        comp[:, iA[s:s + chunk], iB[s:s + chunk]] = vals
        comp[:, iB[s:s + chunk], iA[s:s + chunk]] = vals
    if use_cache:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = path + f".{os.getpid()}.tmp.npz"
        np.savez(tmp, theta=th, comp=comp)
        os.replace(tmp, path)
    return th, comp


def _grid_minima(E, k):
    """Up to k lowest local minima of a periodic grid, as (i, j) pairs with i >= j."""
    finite = np.where(np.isfinite(E), E, np.inf)
    is_min = np.ones_like(finite, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= finite <= np.roll(np.roll(finite, di, 0), dj, 1)
    idx = np.argwhere(is_min & np.isfinite(finite) & (np.arange(E.shape[0])[:, None] >= np.arange(E.shape[1])))
    idx = idx[np.argsort(finite[idx[:, 0], idx[:, 1]])]
    return [tuple(p) for p in idx[:k]]


class _Objective:
    def __init__(self, Delta, V, D, backend, L, order):
        self.args = (Delta, V, D, backend, L, order)
        self.nfev = 0

    def __call__(self, x):
        Delta, V, D, backend, L, order = self.args
        self.nfev += 1
        x = np.clip(x, -np.pi + 1e-9, np.pi - 1e-9)
        try:
            F, n, nnn = energy_components(x[0], x[1], D, backend, L, order)
        except ec.ConvergenceError:
            # degenerate transfer matrix at the corners: never a minimum
            return np.inf
        return float((F - Delta * n + V * nnn)[0])


def minimize(Delta, V=0.0, D=1, backend=None, L=10, order=None, n_grid=GRID_SIZE, n_seeds=3, grid=None,
             with_xi=False):
    """Global variational minimum over [-pi, pi)^2.

    Seeds from the lowest local minima of the tabulated grid, refines each
    with Nelder-Mead (tolerance 1e-8), and compares with the best point on
    the symmetric line theta_A = theta_B.  Returns a PhasePoint with
    theta_A >= theta_B; the exchanged point is the degenerate partner.
    """
    backend = _backend(D, backend)
    order = pt.DEFAULT_ORDER[D] if order is None else order
    th, comp = component_grid(D, backend, L, order, n_grid) if grid is None else grid
    E = comp[0] - Delta * comp[1] + V * comp[2]
    f = _Objective(Delta, V, D, backend, L, order)
    flags = []

    # symmetric line
    diag = np.diagonal(E)
    if np.all(~np.isfinite(diag)):
        raise RuntimeError("no admissible seed on the symmetric line")
    i0 = int(np.nanargmin(diag))
    lo, hi = th[max(i0 - 1, 0)], th[min(i0 + 1, len(th) - 1)]
    sym = minimize_scalar(lambda t: f([t, t]), bounds=(lo, hi), method="bounded",
                          options={"xatol": NM_TOL})
    best_x, best_E = np.array([sym.x, sym.x]), float(sym.fun)

    # off-diagonal seeds: grid minima, plus the symmetric optimum nudged off
    # the line so that a minimum splitting continuously from it is found
    seeds = [(th[i], th[j]) for i, j in _grid_minima(E, n_seeds) if i != j]
    seeds.append((sym.x + SPLIT_NUDGE, sym.x - SPLIT_NUDGE))
    restarts = 0
    for x0 in seeds:
        restarts += 1
        res = sp_minimize(f, x0, method="Nelder-Mead",
                          options={"xatol": NM_TOL, "fatol": 1e-14, "maxiter": 4000})
        if not res.success:
            flags.append("nm_not_converged")
        if res.fun < best_E - ORDER_EPS:
            best_x, best_E = np.asarray(res.x), float(res.fun)
    a, b = (best_x if best_x[0] >= best_x[1] else best_x[::-1])
    if a == b:
        a = b = float(sym.x)
    F, n, nnn, nA, nB = energy_components(a, b, D, backend, L, order, anchors=True)
    if backend == "series" and not _in_regime(a, b, D, order)[0]:
        flags.append("outside_regime")
    p = PhasePoint(D, float(Delta), float(V), float(a), float(b), float(best_E),
                   order_parameter(nA[0], nB[0]) if a != b else 0.0, restarts=restarts, flags=flags)
    if with_xi:
        try:
            p.xi = float(correlation_length(a, b, D, backend, L=L, order=order)["xi"]) if backend != "series" \
                else float(correlation_length(a, b, D, backend, order=order)["xi"])
        except ValueError:
            p.xi = float("nan")
    return p


def is_ordered(p, tol=1e-6):
    return abs(p.theta_A - p.theta_B) > tol


def transition_scan(V=0.0, D=1, Delta_lo=-3.0, Delta_hi=3.0, backend=None, L=10, order=None,
                    step=DELTA_STEP, jump=JUMP_THRESHOLD, grid=None):
    """Locate Delta_c at fixed V by bisection on the ordered/disordered predicate.

    The bracket [Delta_lo, Delta_hi] must contain the transition.  It is
    refined until its width is below ``step``; the tag is 'first' when the
    optimal angles move by more than ``jump`` across the final step and
    'second' otherwise.  Returns a dict with Delta_c, the tag, the jump and
    the two bracketing PhasePoints.
    """
    backend = _backend(D, backend)
    order = pt.DEFAULT_ORDER[D] if order is None else order
    grid = component_grid(D, backend, L, order) if grid is None else grid
    run = lambda d: minimize(d, V, D, backend, L, order, grid=grid)
    p_lo, p_hi = run(Delta_lo), run(Delta_hi)
    if is_ordered(p_lo) or not is_ordered(p_hi):
        raise NoTransition(f"no disorder-to-order transition in Delta in [{Delta_lo}, {Delta_hi}] at V={V}")
    points = [p_lo, p_hi]

    def bisect(lo, hi, width):
        while hi.Delta - lo.Delta > width:
            p = run(0.5 * (lo.Delta + hi.Delta))
            points.append(p)
            if is_ordered(p):
                hi = p
            else:
                lo = p
        return lo, hi, float(np.hypot(hi.theta_A - lo.theta_A, hi.theta_B - lo.theta_B))

    p_lo, p_hi, dtheta = bisect(p_lo, p_hi, step)
    tag = "first" if dtheta > jump else "second"
    fine = dtheta
    if tag == "first":
        # a continuous onset shrinks under refinement (by 4x for a square root,
        # 2x near the tricritical point); a real discontinuity does not
        _, _, fine = bisect(p_lo, p_hi, step / 16)
        if fine < 0.5 * dtheta:
            tag = "second"
    for p in points:
        p.order_tag = tag
    return {"V": V, "D": D, "Delta_c": 0.5 * (p_lo.Delta + p_hi.Delta), "order": tag, "jump": dtheta,
            "jump_refined": fine, "below": p_lo, "above": p_hi, "points": sorted(points, key=lambda q: q.Delta)}


def tricritical_scan(V_lo, V_hi, D=1, Delta_bracket=(-3.0, 3.0), backend=None, L=10, order=None, V_tol=0.01,
                     grid=None, Delta_margin=0.3):
    """Bisect in V for the change from first order (low V) to second order (high V).

    Returns V_c, Delta_tc (the transition detuning at the two bracketing V
    values, averaged) and the scans at the bracket ends.
    """
    backend = _backend(D, backend)
    order = pt.DEFAULT_ORDER[D] if order is None else order
    grid = component_grid(D, backend, L, order) if grid is None else grid

    def scan(V, hint=None):
        lo, hi = Delta_bracket
        if hint is not None:
            lo, hi = max(lo, hint - Delta_margin), min(hi, hint + Delta_margin)
        try:
            return transition_scan(V, D, lo, hi, backend, L, order, grid=grid)
        except NoTransition:
            if hint is None:
                raise
            return transition_scan(V, D, *Delta_bracket, backend, L, order, grid=grid)

    s_lo, s_hi = scan(V_lo), scan(V_hi)
    if s_lo["order"] != "first" or s_hi["order"] != "second":
        raise NoTransition(f"V bracket [{V_lo}, {V_hi}] does not contain a change of transition order "
                           f"({s_lo['order']} at V_lo, {s_hi['order']} at V_hi)")
    history = [s_lo, s_hi]
    while s_hi["V"] - s_lo["V"] > V_tol:
        Vm = 0.5 * (s_lo["V"] + s_hi["V"])
        s = scan(Vm, 0.5 * (s_lo["Delta_c"] + s_hi["Delta_c"]))
        history.append(s)
        if s["order"] == "first":
            s_lo = s
        else:
            s_hi = s
    return {"D": D, "V_c": 0.5 * (s_lo["V"] + s_hi["V"]), "Delta_tc": 0.5 * (s_lo["Delta_c"] + s_hi["Delta_c"]),
            "first": s_lo, "second": s_hi, "history": history}


def critical_exponent(D=1, Delta_c=None, window=(0.005, 0.05), n_points=8, backend=None, L=10, order=None,
                      grid=None, V=0.0):
    """beta from |theta_A* - theta_B*| ~ (Delta - Delta_c)^beta at V = 0.

    Delta_c is located to 1e-6 first if not given.  The fit is a straight
    line in log-log over ``n_points`` log-spaced points in ``window``; the
    result is flagged when R^2 < 0.99.  The same fit on the lower half of
    the window is returned as ``beta_half`` for the stability check.
    """
    if n_points < 6:
        raise ValueError("need at least 6 points in the scaling window")
    backend = _backend(D, backend)
    order = pt.DEFAULT_ORDER[D] if order is None else order
    grid = component_grid(D, backend, L, order) if grid is None else grid
    if Delta_c is None:
        coarse = transition_scan(V, D, backend=backend, L=L, order=order, grid=grid)
        fine = transition_scan(V, D, coarse["below"].Delta, coarse["above"].Delta, backend, L, order, step=1e-6,
                               grid=grid)
        Delta_c = fine["Delta_c"]
    x = np.geomspace(window[0], window[1], n_points)
    y = np.array([_split(minimize(Delta_c + d, V, D, backend, L, order, grid=grid)) for d in x])
    if np.any(y <= 0):
        raise ValueError("order parameter vanishes inside the fit window; Delta_c is off")

    def fit(xx, yy):
        slope, icpt = np.polyfit(np.log(xx), np.log(yy), 1)
        res = np.log(yy) - (slope * np.log(xx) + icpt)
        tot = np.log(yy) - np.log(yy).mean()
        return slope, float(np.exp(icpt)), 1.0 - float(res @ res) / float(tot @ tot)

    beta, amp, r2 = fit(x, y)
    half = x <= np.sqrt(window[0] * window[1]) * 1.0000001
    beta_half = fit(x[half], y[half])[0] if half.sum() >= 3 else float("nan")
    return {"D": D, "Delta_c": float(Delta_c), "beta": float(beta), "amplitude": amp, "r_squared": r2,
            "poor_fit": r2 < 0.99, "beta_half": float(beta_half), "x": x, "y": y}


def _split(p):
    return abs(p.theta_A - p.theta_B)


def write_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow([p.D, f"{p.Delta:.10g}", f"{p.V:.10g}", f"{p.theta_A:.12e}", f"{p.theta_B:.12e}",
                        f"{p.energy:.12e}", f"{p.order_parameter:.12e}", p.order_tag, f"{p.xi:.10g}"])


def summary(obj):
    """JSON-friendly copy of a scan result (PhasePoints become dicts, arrays lists)."""
    if isinstance(obj, PhasePoint):
        return asdict(obj)
    if isinstance(obj, dict):
        return {k: summary(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [summary(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
