"""Command-line front end.

Every command writes headered CSV and a JSON manifest (the full config, the
package version and the list of outputs) into ``--out``, plus a PNG figure
unless ``--no-figure`` is given.

Exit codes: 0 success, 2 invalid configuration, 3 computation failed.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import PackageNotFoundError, version

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


class ConfigError(ValueError):
    pass


def _version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------- parsing


def parse_grid(text, flag):
    """'a:b:step' (inclusive of b within rounding) or a comma list or one number."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return np.round(a + step * np.arange(n), 10)
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigError(f"{flag}: expected a number, a comma list or start:stop:step with step > 0, got {text!r}")


def parse_pair(text, flag):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"{flag}: expected lo:hi, got {text!r}")
    if not lo < hi:
        raise ConfigError(f"{flag}: need lo < hi, got {text!r}")
    return lo, hi


def _check_dim(D, allowed=(1, 2, 3)):
    if D not in allowed:
        raise ConfigError(f"--dim must be one of {allowed}, got {D}")


def _fmt(x):
    if isinstance(x, (str, bool, np.bool_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10e}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


class Run:
    """Collects outputs and writes the manifest at the end."""

    def __init__(self, args):
        self.args = args
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def figure(self, name, draw):
        if self.args.no_figure:
            return
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        draw(fig, ax)
        fig.tight_layout()
        fig.savefig(self.path(name), dpi=120, metadata={"Software": None})
        plt.close(fig)

    def finish(self, summary):
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {"command": self.args.command, "config": config, "version": _version(),
                    "outputs": self.files, "summary": summary}
        write_json(os.path.join(self.out, f"{self.args.command}_manifest.json"), manifest)
        return manifest


def _pool(workers):
    return None if workers <= 1 else ProcessPoolExecutor(max_workers=workers)


def _map(workers, fn, items):
    pool = _pool(workers)
    if pool is None:
        return [fn(x) for x in items]
    with pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- commands


def cmd_counting(args):
    from . import perturbative as pt

    _check_dim(args.dim)
    if args.order < 0 or args.order > pt.MAX_ORDER[args.dim]:
        raise ConfigError(f"--order must be in [0, {pt.MAX_ORDER[args.dim]}] for D={args.dim}, got {args.order}")
    table = pt.enumerate_counting_factors(args.dim, args.op, args.order)
    f = table.factors()
    run = Run(args)
    name = f"counting_D{args.dim}_{args.op.replace(':', '_')}_o{args.order}"
    write_csv(run.path(name + ".csv"), ["n", "m", "f"],
              [(n, m, int(f[n, m])) for n in range(args.order + 1) for m in range(args.order + 1 - n)])
    for n in range(args.order + 1):
        print(" ".join(f"{int(f[n, m]):>10d}" for m in range(args.order + 1 - n)))

    def draw(fig, ax):
        k = np.arange(args.order + 1)
        ax.semilogy(k, np.maximum(table.row_sums(), 1), "o-")
        ax.set_xlabel("order k")
        ax.set_ylabel("f_k")
        ax.set_title(f"{args.op}, D={args.dim}")

    run.figure(name + ".png", draw)
    run.finish({"row_sums": table.row_sums(), "masks": len(table.masks)})


def _phase_point(job):
    from . import groundstate as gs

    D, Delta, V, backend, L, order, with_xi = job
    p = gs.minimize(Delta, V, D, backend, L, order, with_xi=with_xi)
    return p


def cmd_phase(args):
    from . import groundstate as gs

    _check_dim(args.dim)
    deltas = parse_grid(args.delta, "--delta")
    vs = parse_grid(args.v, "--v")
    # tabulate the seed grid once in this process so the workers read the cache
    gs.component_grid(args.dim, args.backend, args.L, args.order)
    jobs = [(args.dim, float(d), float(v), args.backend, args.L, args.order, args.xi) for v in vs for d in deltas]
    points = _map(args.workers, _phase_point, jobs)
    for p in points:
        p.order_tag = "ordered" if gs.is_ordered(p) else "disordered"
    run = Run(args)
    gs.write_csv(points, run.path(f"phase_D{args.dim}.csv"))
    onset = {}
    for v in vs:
        row = [p for p in points if p.V == float(v)]
        ordered = [p.Delta for p in row if gs.is_ordered(p)]
        onset[f"{v:g}"] = min(ordered) if ordered else None

    def draw(fig, ax):
        for v in vs:
            row = [p for p in points if p.V == float(v)]
            ax.plot([p.Delta for p in row], [p.order_parameter for p in row], ".-", label=f"V={v:g}")
        ax.set_xlabel("Delta")
        ax.set_ylabel("|<sz_A> - <sz_B>|")
        ax.legend(fontsize=7)

    run.figure(f"phase_D{args.dim}.png", draw)
    run.finish({"first_ordered_Delta": onset})


def cmd_transition(args):
    from . import groundstate as gs

    _check_dim(args.dim)
    lo, hi = parse_pair(args.bracket, "--bracket")
    run = Run(args)
    summary = {}
    if args.tricritical:
        vlo, vhi = parse_pair(args.tricritical, "--tricritical")
        r = gs.tricritical_scan(vlo, vhi, args.dim, (lo, hi), args.backend, args.L, args.order)
        summary = {"V_c": r["V_c"], "Delta_tc": r["Delta_tc"]}
        scans = sorted(r["history"], key=lambda s: s["V"])
    else:
        scans = [gs.transition_scan(float(v), args.dim, lo, hi, args.backend, args.L, args.order)
                 for v in parse_grid(args.v, "--v")]
    write_csv(run.path(f"transition_D{args.dim}.csv"), ["V", "Delta_c", "order", "jump"],
              [(s["V"], s["Delta_c"], s["order"], s["jump"]) for s in scans])
    summary["transitions"] = [{"V": s["V"], "Delta_c": s["Delta_c"], "order": s["order"], "jump": s["jump"]}
                              for s in scans]
    if args.beta:
        b = gs.critical_exponent(args.dim, backend=args.backend, L=args.L, order=args.order)
        summary["beta"] = {k: b[k] for k in ("Delta_c", "beta", "r_squared", "beta_half", "poor_fit")}

    def draw(fig, ax):
        for tag, mk in (("first", "s"), ("second", "o")):
            pts = [(s["V"], s["Delta_c"]) for s in scans if s["order"] == tag]
            if pts:
                ax.plot(*zip(*pts), mk, label=f"{tag} order")
        if "V_c" in summary:
            ax.plot([summary["V_c"]], [summary["Delta_tc"]], "r*", ms=12, label="tricritical")
        ax.set_xlabel("V")
        ax.set_ylabel("Delta_c")
        ax.legend(fontsize=7)

    run.figure(f"transition_D{args.dim}.png", draw)
    run.finish(summary)


def cmd_correlation(args):
    from .expectation import correlation_length, correlation_length_1d_exact

    _check_dim(args.dim)
    kw = {"L": args.L} if args.dim == 2 else {"order": args.order} if args.dim == 3 else {}
    r = correlation_length(args.theta_a, args.theta_b, args.dim, args.backend, r_max=args.r_max, **kw)
    run = Run(args)
    write_csv(run.path(f"correlation_D{args.dim}.csv"), ["r", "C"], list(zip(r["r"], r["correlator"])))
    summary = {k: r[k] for k in ("xi", "amplitude", "r_squared", "monotone")}
    if args.dim == 1:
        summary["xi_transfer_matrix"] = float(correlation_length_1d_exact(args.theta_a, args.theta_b))

    def draw(fig, ax):
        ax.semilogy(r["r"], np.abs(r["correlator"]), "o")
        ax.set_xlabel("r")
        ax.set_ylabel("|C(r)|")
        ax.set_title(f"xi = {r['xi']:.4g}")

    run.figure(f"correlation_D{args.dim}.png", draw)
    run.finish(summary)


def _flow_chunk(job):
    from . import tdvp

    a, b, D, backend, L, order = job
    m = tdvp._manifold(a, b, D, backend, L, order)
    return tdvp.leakage(None, None, D, manifold=m, with_velocity=True)


def cmd_flow(args):
    _check_dim(args.dim)
    if args.grid < 2:
        raise ConfigError(f"--grid must be at least 2, got {args.grid}")
    th = -np.pi + (np.arange(args.grid) + 0.5) * 2 * np.pi / args.grid
    TA, TB = np.meshgrid(th, th, indexing="ij")
    a, b = TA.ravel(), TB.ravel()
    chunk = 200
    jobs = [(a[i:i + chunk], b[i:i + chunk], args.dim, args.backend, args.L, args.order)
            for i in range(0, a.size, chunk)]
    parts = _map(args.workers, _flow_chunk, jobs)
    gm = np.concatenate([p[0] for p in parts])
    vA = np.concatenate([p[1] for p in parts])
    vB = np.concatenate([p[2] for p in parts])
    run = Run(args)
    write_csv(run.path(f"flow_D{args.dim}.csv"), ["thetaA", "thetaB", "dthetaA", "dthetaB", "gamma"],
              list(zip(a, b, vA, vB, gm)))

    def draw(fig, ax):
        n = args.grid
        im = ax.pcolormesh(th, th, gm.reshape(n, n).T, shading="nearest", cmap="viridis")
        fig.colorbar(im, ax=ax, label="gamma")
        ax.quiver(TA, TB, vA.reshape(n, n), vB.reshape(n, n), color="w", scale=60)
        ax.set_xlabel("theta_A")
        ax.set_ylabel("theta_B")

    run.figure(f"flow_D{args.dim}.png", draw)
    run.finish({"points": int(a.size), "max_gamma": float(np.nanmax(gm))})


def cmd_orbit(args):
    from . import tdvp

    _check_dim(args.dim)
    if args.dt <= 0:
        raise ConfigError(f"--dt must be positive, got {args.dt}")
    r = tdvp.period(args.dim, args.backend, args.dt, args.L, args.order)
    run = Run(args)
    first, second = r["legs"]
    rows = list(zip(first.t, first.theta_A, first.theta_B, first.gamma))
    t0 = first.t[-1]
    rows += list(zip(t0 + second.t[1:], second.theta_A[1:], second.theta_B[1:], second.gamma[1:]))
    write_csv(run.path(f"orbit_D{args.dim}.csv"), ["t", "thetaA", "thetaB", "gamma"], rows)
    summary = {k: r[k] for k in ("D", "backend", "order", "period", "integrated_leakage", "completed", "flags",
                                 "half_periods", "closure_distance")}
    write_json(run.path(f"orbit_D{args.dim}.json"), summary)

    def draw(fig, ax):
        ax.plot(first.theta_A, first.theta_B, "-", label="Z2 -> Z2'")
        ax.plot(second.theta_A, second.theta_B, "--", label="Z2' -> Z2")
        ax.set_xlim(-np.pi, np.pi)
        ax.set_ylim(-np.pi, np.pi)
        ax.set_xlabel("theta_A")
        ax.set_ylabel("theta_B")
        ax.set_title(f"T = {r['period']:.4f}")
        ax.legend(fontsize=7)

    run.figure(f"orbit_D{args.dim}.png", draw)
    run.finish(summary)
    print(f"period {r['period']:.6f}  integrated leakage {r['integrated_leakage']:.6f}")


def _ed_lattice(args):
    from .lattice import Lattice

    if args.extent:
        ext = tuple(int(x) for x in args.extent.split("x"))
    elif args.n:
        ext = (args.n,) * args.dim if args.dim > 1 else (args.n,)
    else:
        raise ConfigError("ed: give --n or --extent")
    if len(ext) != args.dim:
        raise ConfigError(f"--extent {args.extent!r} does not have {args.dim} factors")
    try:
        return Lattice(args.dim, ext, args.boundary)
    except ValueError as e:
        raise ConfigError(f"--extent/--boundary: {e}")


def cmd_ed(args):
    from . import ed_oracle as ed

    _check_dim(args.dim)
    lat = _ed_lattice(args)
    budget = ed.BASIS_BUDGET if args.max_basis is None else int(args.max_basis)
    if budget < 1:
        raise ConfigError(f"--max-basis must be positive, got {args.max_basis}")
    run = Run(args)
    tag = f"ed_{args.mode}_D{args.dim}_{'x'.join(map(str, lat.extent))}"
    if args.mode == "gs":
        basis = ed.build_basis(lat, budget)
        E, _, info = ed.ground_state(basis, args.delta, args.v)
        summary = {"energy": E, "energy_per_site": E / lat.n_sites, "basis_size": basis.size, **info}
        write_json(run.path(tag + ".json"), summary)
    elif args.mode == "fidelity":
        basis = ed.build_basis(lat, budget)
        ds = parse_grid(args.deltas, "--deltas")
        F = ed.fidelity_susceptibility(basis, ds, args.v, args.d_delta)
        write_csv(run.path(tag + ".csv"), ["Delta", "F"], list(zip(ds, F)))
        summary = {"peak_Delta": float(ds[int(np.argmax(F))]), "basis_size": basis.size}

        def draw(fig, ax):
            ax.plot(ds, F, ".-")
            ax.set_xlabel("Delta")
            ax.set_ylabel("fidelity susceptibility")

        run.figure(tag + ".png", draw)
    else:
        summary, times, fid = ed.revival(lat, args.t_max, args.dt, args.delta, args.v, budget)
        write_csv(run.path(tag + ".csv"), ["t", "fidelity"], list(zip(times, fid)))

        def draw(fig, ax):
            ax.plot(times, fid)
            ax.axvline(summary["period"], color="r", lw=0.8)
            ax.set_xlabel("t")
            ax.set_ylabel("|<psi0|psi(t)>|")
            ax.set_title(f"T = {summary['period']:.4f}")

        run.figure(tag + ".png", draw)
    run.finish(summary)
    print(json.dumps(_jsonable(summary), sort_keys=True))


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="artifact", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, backend=True):
        sp.add_argument("--dim", type=int, default=1)
        sp.add_argument("--out", default=".")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--no-figure", action="store_true")
        if backend:
            sp.add_argument("--backend", choices=["exact_1d", "cylinder", "series"], default=None)
            sp.add_argument("--L", type=int, default=10, help="cylinder circumference")
            sp.add_argument("--order", type=int, default=None, help="series order")

    s = sub.add_parser("counting", help="counting factors f[n, m]")
    common(s, backend=False)
    s.add_argument("--op", default="n")
    s.add_argument("--order", type=int, default=6)
    s.set_defaults(func=cmd_counting)

    s = sub.add_parser("phase", help="variational ground states on a (Delta, V) grid")
    common(s)
    s.add_argument("--delta", default="-2:3:0.05")
    s.add_argument("--v", default="0")
    s.add_argument("--xi", action="store_true", help="also compute the correlation length")
    s.set_defaults(func=cmd_phase)

    s = sub.add_parser("transition", help="Delta_c and transition order; optional tricritical search")
    common(s)
    s.add_argument("--v", default="0")
    s.add_argument("--bracket", default="-3:3", help="Delta bracket lo:hi")
    s.add_argument("--tricritical", default=None, help="V bracket lo:hi")
    s.add_argument("--beta", action="store_true", help="fit the order-parameter exponent at V=0")
    s.set_defaults(func=cmd_transition)

    s = sub.add_parser("correlation", help="connected <n n> correlator and xi")
    common(s)
    s.add_argument("--theta-a", type=float, required=True)
    s.add_argument("--theta-b", type=float, required=True)
    s.add_argument("--r-max", type=int, default=None)
    s.set_defaults(func=cmd_correlation)

    s = sub.add_parser("flow", help="TDVP flow field and leakage on a grid")
    common(s)
    s.add_argument("--grid", type=int, default=41)
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("orbit", help="Z2 orbit: period and integrated leakage")
    common(s)
    s.add_argument("--dt", type=float, default=None)
    s.set_defaults(func=cmd_orbit)

    s = sub.add_parser("ed", help="exact diagonalization: gs, fidelity, revival")
    common(s, backend=False)
    s.add_argument("mode", choices=["gs", "fidelity", "revival"])
    s.add_argument("--n", type=int, default=None, help="linear size")
    s.add_argument("--extent", default=None, help="e.g. 4x4")
    s.add_argument("--boundary", choices=["periodic", "open"], default="periodic")
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--v", type=float, default=0.0)
    s.add_argument("--deltas", default="-1:0.5:0.05")
    s.add_argument("--d-delta", type=float, default=1e-3)
    s.add_argument("--t-max", type=float, default=6.0)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--max-basis", type=float, default=None,
                   help="resource flag: raise the basis budget (default 5e6 states), e.g. for a 4x4x4 cube")
    s.set_defaults(func=cmd_ed)
    return p


def _compute_errors():
    from . import ed_oracle as ed
    from . import exact_contraction as ec
    from . import groundstate as gs

    return (ec.ConvergenceError, gs.NoTransition, gs.RegimeError, ed.BudgetExceeded, ed.NoRevival,
            ArithmeticError, RuntimeError)


# range options whose values often start with a minus sign
RANGE_FLAGS = ("--delta", "--v", "--bracket", "--tricritical", "--deltas")


def _glue_ranges(argv):
    """Turn ``--bracket -1:2`` into ``--bracket=-1:2`` so argparse does not read -1:2 as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in RANGE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_glue_ranges(argv))
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    if getattr(args, "dt", 1) is None:
        args.dt = 1e-3 if args.dim == 1 else 1e-2
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _compute_errors() as e:
        print(f"computation failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as e:
        # library-level validation (backend/dimension mismatch, bad kinds, ...)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
