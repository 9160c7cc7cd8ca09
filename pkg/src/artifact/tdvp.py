"""TDVP dynamics on the (theta_A, theta_B) plane at phi = 0.

theta_dot_A = -i (K + D S) / G, anchored on A; theta_dot_B by exchanging the
sublattices.  The quantum leakage per site is

    gamma^2 = <H^2>/N - (theta_dot_A^2 G_A + theta_dot_B^2 G_B) / 2

On blockaded states <H^2> = sum_i <prod_{j~i} P_j> + sum_{<ij>} <sx_i sx_j>
+ sum_{i != j, not adjacent} <sx_i sx_j>, the adjacent sum running over
unordered pairs and the other over ordered pairs.  Only the e_i - e_j
diagonals give nonzero non-adjacent <sx_i sx_j> for the ansatz at phi = 0,
D(D-1) of them per site.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from . import perturbative as pt
from .expectation import Manifold, default_backend
from .lattice import unit

G_FLOOR = 1e-30  # G vanishes like cos^(2D)(theta_other/2) near the Z2 corners, so keep this tiny
REGIME_THRESHOLD = 1e-3
# gamma^2 is a difference of O(1) numbers; below this fraction of <H^2> it is roundoff
GAMMA2_NOISE = 1e-14


class SingularPoint(ArithmeticError):
    pass


def closed_form_1d(theta_A, theta_B):
    """1D velocity f(theta_A, theta_B) = 2(cos(b/2) + sin(a/2) cos^2(a/2) tan(b/2))."""
    a, b = np.asarray(theta_A, dtype=float), np.asarray(theta_B, dtype=float)
    return 2.0 * (np.cos(b / 2) + np.sin(a / 2) * np.cos(a / 2) ** 2 * np.tan(b / 2))


def axis_velocity(theta_other, D):
    """theta_dot of a sublattice whose own angle is 0: 2 cos^D(theta_other/2)."""
    return 2.0 * np.cos(np.asarray(theta_other) / 2) ** D


def _diag_offset(D):
    return tuple(unit(D, 0)[k] - unit(D, 1)[k] for k in range(D))


def _velocity(m, anchor):
    D = m.D
    K = m.value(ops.k_term(D), anchor)
    S = m.value(ops.s_term(D), anchor)
    G = m.real(ops.gram(D), anchor)
    own = m.theta_A if anchor == "A" else m.theta_B
    other = m.theta_B if anchor == "A" else m.theta_A
    num = -1j * (K + D * S)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (num / G).real
    small = np.abs(G) < G_FLOOR
    v = np.where(small & (own == 0), axis_velocity(other, D), v)
    v = np.where(small & (own != 0), np.nan, v)
    return v, G


def _h2(m, anchor):
    D = m.D
    h = m.real(ops.neighbor_projector(D), anchor)
    # adjacent i, j: PXP_i PXP_j = sigma+_i sigma-_j on blockaded states, so the
    # ordered sum over adjacent pairs is the unordered sum of <sx sx>
    for k in range(D):
        for s in (1, -1):
            h = h + 0.5 * m.real(ops.sx_sx(D, unit(D, k, s)), anchor)
    if D > 1:
        h = h + D * (D - 1) * m.real(ops.sx_sx(D, _diag_offset(D)), anchor)
    return h


def _manifold(theta_A, theta_B, D, backend, L, order):
    return Manifold(theta_A, theta_B, D, backend, 0.0, 0.0, L=L, order=order)


def eom(theta_A, theta_B, D=1, backend=None, L=10, order=None, manifold=None):
    """(theta_dot_A, theta_dot_B) as arrays.  NaN marks the singular lines theta = +-pi."""
    m = _manifold(theta_A, theta_B, D, backend, L, order) if manifold is None else manifold
    return _velocity(m, "A")[0], _velocity(m, "B")[0]


def leakage(theta_A, theta_B, D=1, backend=None, L=10, order=None, manifold=None, with_velocity=False):
    """Leakage rate gamma per site (and optionally the velocities)."""
    m = _manifold(theta_A, theta_B, D, backend, L, order) if manifold is None else manifold
    vA, GA = _velocity(m, "A")
    vB, GB = _velocity(m, "B")
    h2 = 0.5 * (_h2(m, "A") + _h2(m, "B"))
    g2 = h2 - 0.5 * (vA**2 * GA + vB**2 * GB)
    g2 = np.where(np.abs(g2) < GAMMA2_NOISE * np.abs(h2), 0.0, g2)
    bad = g2 < -1e-10
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ArithmeticError(
            f"negative leakage {g2[i]:.3g} at ({m.theta_A[i]:.6g}, {m.theta_B[i]:.6g}): backend inconsistency"
        )
    gamma = np.sqrt(np.clip(g2, 0.0, None))
    if with_velocity:
        return gamma, vA, vB
    return gamma


@dataclass
class Trajectory:
    D: int
    backend: str
    order: int
    t: np.ndarray
    theta_A: np.ndarray
    theta_B: np.ndarray
    gamma: np.ndarray
    completed: bool = True
    flags: list = field(default_factory=list)

    @property
    def integrated_leakage(self):
        return float(np.trapezoid(self.gamma, self.t)) if len(self.t) > 1 else 0.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "thetaA", "thetaB", "gamma"])
            for row in zip(self.t, self.theta_A, self.theta_B, self.gamma):
                w.writerow([f"{x:.12e}" for x in row])


def _regime_increment(y, D, order):
    """max |S_N - S_{N-1}| of <n> on both sublattices at one point (series backend)."""
    terms = ops.number(D)
    inc = 0.0
    for anchor in ("A", "B"):
        S = pt.partial_sums_terms(terms, [y[0]], [y[1]], D=D, order=order, anchor=anchor)
        inc = max(inc, float(abs(S[0, order] - S[0, order - 1])))
    return inc


def integrate(start, D=1, backend=None, dt=1e-3, t_max=10.0, L=10, order=None, stop=None,
              record_gamma=True, check_regime=None):
    """Fixed-step RK4 integration from ``start``.

    ``stop(y_old, y_new)`` may return a fraction in (0, 1] at which the step
    crosses a stopping surface; the final state is linearly interpolated
    there.  With the series backend the run is truncated (and flagged) when
    the series stops converging to 1e-3.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    backend = default_backend(D) if backend is None else backend
    order = pt.DEFAULT_ORDER[D] if order is None else order
    if check_regime is None:
        check_regime = backend == "series"

    def f(y):
        m = _manifold(y[0], y[1], D, backend, L, order)
        return np.array([_velocity(m, "A")[0][0], _velocity(m, "B")[0][0]])

    def g(y):
        if not record_gamma:
            return np.nan
        return float(leakage(y[0], y[1], D, backend, L, order)[0])

    y = np.array(start, dtype=float)
    ts, ys, gs = [0.0], [y.copy()], [g(y)]
    flags = []
    t = 0.0
    completed = False
    n_steps = int(np.ceil(t_max / dt))
    for _ in range(n_steps):
        k1 = f(y)
        k2 = f(y + dt / 2 * k1)
        k3 = f(y + dt / 2 * k2)
        k4 = f(y + dt * k3)
        yn = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(yn)):
            flags.append("singular")
            break
        frac = stop(y, yn) if stop is not None else None
        if frac is not None:
            y = y + frac * (yn - y)
            t += frac * dt
            ts.append(t)
            ys.append(y.copy())
            gy = g(y)
            # the endpoint sits on the singular line; keep the last finite rate
            gs.append(gs[-1] if np.isnan(gy) and record_gamma else gy)
            completed = True
            break
        y, t = yn, t + dt
        if check_regime and _regime_increment(y, D, order) > REGIME_THRESHOLD:
            flags.append("left_regime")
            break
        ts.append(t)
        ys.append(y.copy())
        gs.append(g(y))
    else:
        completed = stop is None
        if stop is not None:
            flags.append("no_closure")
    ys = np.array(ys)
    return Trajectory(D, backend, order, np.array(ts), ys[:, 0], ys[:, 1], np.array(gs), completed, flags)


def _crossing(index, level, margin):
    """Stop when component ``index`` reaches ``level - margin``; return the interpolation fraction to ``level``."""

    def stop(y0, y1):
        if y1[index] >= level - margin:
            if y1[index] == y0[index]:
                return 1.0
            # linear extrapolation over the last stretch to the singular line
            return float((level - y0[index]) / (y1[index] - y0[index]))
        return None

    return stop


def period(D=1, backend=None, dt=1e-3, L=10, order=None, margin=1e-3, record_gamma=True):
    """Full Z2 -> Z2' -> Z2 period and the orbit leakage.

    Integrates from (-pi, 0) until theta_B reaches pi (Z2'), then the
    mirrored leg from (0, -pi) until theta_A reaches pi.  The last stretch
    before the singular line theta = pi (within ``margin``) is closed by
    linear extrapolation.  Returns a dict with the period, both legs, the
    closure distance to (pi, 0) and the integrated leakage.
    """
    first = integrate((-np.pi, 0.0), D, backend, dt, 10.0, L, order, _crossing(1, np.pi, margin), record_gamma)
    second = integrate((0.0, -np.pi), D, backend, dt, 10.0, L, order, _crossing(0, np.pi, margin), record_gamma)
    ok = first.completed and second.completed
    T = first.t[-1] + second.t[-1] if ok else np.nan
    mid_gap = float(np.hypot(first.theta_A[-1] - 0.0, first.theta_B[-1] - np.pi))
    end = np.array([second.theta_A[-1], second.theta_B[-1]])
    closure = float(np.hypot(end[0] - np.pi, end[1]))
    leak = first.integrated_leakage + second.integrated_leakage if record_gamma else np.nan
    return {
        "D": D,
        "backend": first.backend,
        "order": first.order,
        "period": float(T),
        "half_periods": [float(first.t[-1]), float(second.t[-1])],
        "midpoint_distance": mid_gap,
        "closure_distance": closure,
        "integrated_leakage": float(leak),
        "completed": bool(ok),
        "flags": first.flags + second.flags,
        "legs": (first, second),
    }


def diagonal_leakage(D=1, backend=None, L=10, order=None, n_nodes=16, eps=1e-6):
    """Integrated leakage int gamma dt along the invariant diagonal from (0, 0) towards (pi, pi).

    Written as int gamma / theta_dot d theta and done by composite
    Gauss-Legendre, with the last stretch in log(pi - theta) down to
    pi - eps.  In 1D theta_dot vanishes linearly at the corner while gamma
    does not, so the integral grows like log(1/eps); ``converged`` reports
    whether the last decade changed the value by less than 1e-3.
    Returns a dict with the leakage, the elapsed time and that flag.
    """
    x, w = np.polynomial.legendre.leggauss(n_nodes)

    def rule(a, b):
        return 0.5 * (b - a) * (x + 1.0) + a, 0.5 * (b - a) * w

    thetas, weights = [], []
    for a, b in ((0.0, 2.5), (2.5, 3.0), (3.0, np.pi - 1e-2)):
        th, wt = rule(a, b)
        thetas.append(th)
        weights.append(wt)
    # theta = pi - exp(u): d theta = exp(u) du
    decades = np.arange(np.log10(1e-2), np.log10(eps) - 1e-9, -1.0)
    for hi, lo in zip(decades[:-1], decades[1:]):
        u, wu = rule(lo * np.log(10), hi * np.log(10))
        thetas.append(np.pi - np.exp(u))
        weights.append(wu * np.exp(u))
    th = np.concatenate(thetas)
    wt = np.concatenate(weights)
    gamma, vA, _ = leakage(th, th, D, backend, L, order, with_velocity=True)
    leak = wt * gamma / vA
    time = wt / vA
    last = len(x)
    return {
        "D": D,
        "theta_end": float(np.pi - eps),
        "leakage": float(leak.sum()),
        "time": float(time.sum()),
        "last_decade": float(leak[-last:].sum()),
        "converged": bool(leak[-last:].sum() < 1e-3),
    }


def flow_field(thetas_A, thetas_B, D=1, backend=None, L=10, order=None, with_gamma=True, chunk=400):
    """Velocities (and leakage) on the outer-product grid of the given angles.

    Returns arrays of shape (len(thetas_A), len(thetas_B)).
    """
    TA, TB = np.meshgrid(np.asarray(thetas_A, float), np.asarray(thetas_B, float), indexing="ij")
    a, b = TA.ravel(), TB.ravel()
    vA, vB, gm = np.empty_like(a), np.empty_like(a), np.full_like(a, np.nan)
    for i in range(0, a.size, chunk):
        sl = slice(i, i + chunk)
        m = _manifold(a[sl], b[sl], D, backend, L, order)
        if with_gamma:
            gm[sl], vA[sl], vB[sl] = leakage(None, None, D, manifold=m, with_velocity=True)
        else:
            vA[sl], vB[sl] = eom(None, None, D, manifold=m)
    shape = TA.shape
    return vA.reshape(shape), vB.reshape(shape), gm.reshape(shape)


def summary_json(result, path):
    out = {k: v for k, v in result.items() if k != "legs"}
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
