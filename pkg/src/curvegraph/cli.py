"""
Command-line entry point.

Every subcommand writes one JSON report (stdout or ``--out``) and, where
residual rows exist, an optional CSV (``--csv``). Exit status is 0 when all
requested checks pass, 2 when a check fails and 1 on input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from . import __version__

SCHEMA = 1
EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2


class InputError(Exception):
    """Bad configuration or graph."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# the Gaussian fit and Poincare constants are defined for the degree measure
DEGREE_DEFAULT = {"gaussian", "poincare"}


def _apply_thread_cap():
    cap = os.environ.get("CURVEGRAPH_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _dim_grid(text):
    """``a:b`` (integers a..b), ``a:b:s`` or a comma list."""
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1.0
            out, v = [], lo
            while v <= hi + 1e-12:
                out.append(round(v, 12))
                v += step
            return out
        return _floats(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension grid {text!r}")


def _positive(name, value):
    if not value > 0:
        raise InputError(f"{name} must be positive (got {value})")
    return value


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def build_parser():
    p = _Parser(prog="curvegraph", description=__doc__.strip().splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--graph", help="edge-list TSV (u<TAB>v<TAB>w)")
    common.add_argument("--measure", choices=["unit", "degree"], default=None,
                        help="vertex measure (default: degree for gaussian/poincare, else unit)")
    common.add_argument("--sidecar", help="JSON file with a per-vertex 'measure' map")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="JSON output path (default stdout)")
    common.add_argument("--csv", help="CSV path for residual rows")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("metrics", parents=[common], help="D_mu, omega_min, alpha_max, diameter")

    s = sub.add_parser("curvature", parents=[common], help="best curvature constants")
    s.add_argument("--n", type=float, help="dimension for per-vertex estimates")
    s.add_argument("--dim-grid", type=_dim_grid, help="certify CDE'(n,0) over a:b")
    s.add_argument("--flavor", default="CDE'")
    s.add_argument("--K", type=float, default=None, help="required curvature (pass/fail)")
    s.add_argument("--starts", type=int, default=64)
    s.add_argument("--vertices", nargs="+", help="vertex subset")
    s.add_argument("--tol", type=float, default=1e-6)

    s = sub.add_parser("heat", parents=[common], help="heat kernel values")
    s.add_argument("--x", required=True)
    s.add_argument("--y")
    s.add_argument("--t", type=_floats, default=[1.0])
    s.add_argument("--exhaust", action="store_true")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--radius-budget", type=int, default=64)

    s = sub.add_parser("liyau", parents=[common], help="Li-Yau family residuals")
    s.add_argument("--x", required=True, help="center of the mollified point mass")
    s.add_argument("--T", type=_floats, default=[0.25, 1.0, 4.0])
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--K", type=float, default=0.0)
    s.add_argument("--b", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-9)

    s = sub.add_parser("variational", parents=[common], help="variational inequality")
    s.add_argument("--x", required=True)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--tau", type=_floats, default=[0.1, 1.0, 5.0])
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-8)

    s = sub.add_parser("harnack", parents=[common], help="Harnack inequality residuals")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--D", type=float)
    s.add_argument("--tol", type=float, default=1e-10)

    s = sub.add_parser("expint", parents=[common], help="exponential integrability")
    s.add_argument("--x", required=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--rho", type=float, default=0.1)

    s = sub.add_parser("doubling", parents=[common], help="volume doubling constant")
    s.add_argument("--rmax", type=float, default=8.0)
    s.add_argument("--centers", nargs="+", help="ball centers (default all)")

    s = sub.add_parser("gaussian", parents=[common], help="discrete Gaussian sandwich")
    s.add_argument("--nmax", type=int, required=True)
    s.add_argument("--sources", nargs="+", help="source vertices (default all)")

    s = sub.add_parser("poincare", parents=[common], help="Poincare constants")
    s.add_argument("--x", required=True)
    s.add_argument("--r", type=_floats, default=[1.0])

    s = sub.add_parser("lsi", parents=[common], help="log-Sobolev residuals")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--K", type=float, required=True, help="curvature for the original measure")
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--tol", type=float, default=1e-8)

    s = sub.add_parser("diameter", parents=[common], help="diameter bounds")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--K", type=float, required=True)
    s.add_argument("--dmu", type=float, default=None)

    s = sub.add_parser("decay", parents=[common], help="semigroup decay constants")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--K", type=float, required=True, help="curvature for the original measure")
    s.add_argument("--t0", type=float, default=0.5)
    s.add_argument("--span", type=float, default=5.0)
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-8)
    return p


def _load(args, required=True):
    from .graph import GraphError, load_graph_file
    if not args.graph:
        if required:
            raise InputError("--graph is required for this subcommand")
        return None
    try:
        return load_graph_file(args.graph, args.measure, args.sidecar)
    except (OSError, GraphError, ValueError) as exc:
        raise InputError(f"cannot load graph: {exc}") from exc


def _vertex(g, name):
    from .graph import GraphError
    try:
        return g.idx(name)
    except GraphError as exc:
        raise InputError(str(exc)) from exc


def _names(g, vertices):
    return None if not vertices else [g.names[_vertex(g, v)] for v in vertices]


# ---------------------------------------------------------------------------
# subcommands: each returns (report dict, pass flag, csv rows)


def cmd_metrics(args, g):
    from .graph import graph_metrics
    m = graph_metrics(g)
    return {"d_mu": m.d_mu, "omega_min": m.omega_min, "alpha_max": m.alpha_max,
            "diameter_hops": m.diameter_hops, "vertices": g.n, "edges": g.num_edges}, True, []


def cmd_curvature(args, g):
    from .curvature import DegenerateVertexError, certify_nonnegative, optimal_K
    vertices = _names(g, args.vertices)
    if args.dim_grid:
        cert = certify_nonnegative(g, args.dim_grid, sample_budget=args.starts, tol=args.tol,
                                   seed=args.seed, vertices=vertices)
        return {"certification": cert.to_dict()}, cert.certified, []
    if args.n is None:
        raise InputError("give --n or --dim-grid")
    _positive("--n", args.n)
    reports, ok, rows = [], True, []
    for v in (vertices or g.names):
        try:
            rep = optimal_K(g, v, args.n, args.flavor, starts=args.starts, seed=args.seed)
        except DegenerateVertexError as exc:
            reports.append({"vertex": v, "error": str(exc)})
            ok = False
            continue
        reports.append(rep.to_dict())
        if args.K is not None and rep.K_estimate < args.K - args.tol:
            ok = False
        rows.append((v, args.n, rep.K_estimate, "" if args.K is None else args.K,
                     "" if args.K is None else rep.K_estimate - args.K))
    return {"reports": reports}, ok, rows


def cmd_heat(args, g):
    from .heat import ConvergenceError, heat_kernel
    x = _vertex(g, args.x)
    y = _vertex(g, args.y if args.y is not None else args.x)
    values, rows, ok = [], [], True
    for t in args.t:
        _positive("--t", t)
        try:
            hv = heat_kernel(g, x, y, t, tol=args.tol, exhaust=args.exhaust,
                             max_radius=args.radius_budget)
            values.append({"t": t, "value": hv.value, "radius": hv.radius, "delta": hv.delta,
                           "exact": hv.exact})
            rows.append((f"{g.names[x]}|{g.names[y]}", t, hv.value, "", ""))
        except ConvergenceError as exc:
            values.append({"t": t, "error": str(exc), "radius": exc.radius, "delta": exc.delta})
            ok = False
    return {"x": g.names[x], "y": g.names[y], "values": values}, ok, rows


def _merge(reports):
    rows = [r for rep in reports for r in rep.rows]
    return ({"reports": [rep.to_dict() for rep in reports]},
            all(rep.passed for rep in reports), rows)


def cmd_liyau(args, g):
    from .estimates import li_yau_check
    from .heat import mollify
    f = mollify(g, _vertex(g, args.x))
    try:
        reps = [li_yau_check(g, f, _positive("--T", T), args.n, args.K, args.b, tol=args.tol)
                for T in args.T]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return _merge(reps)


def cmd_variational(args, g):
    from .estimates import derivative_identity_error, integrated_variational_check
    from .heat import mollify
    f = mollify(g, _vertex(g, args.x))
    _positive("--T", args.T)
    reps = [integrated_variational_check(g, f, args.T, _positive("--tau", tau), args.n,
                                         tol=args.tol) for tau in args.tau]
    out, ok, rows = _merge(reps)
    err = max(derivative_identity_error(g, f, args.T, s * args.T) for s in (0.25, 0.5, 0.75))
    out["identity_max_error"] = err
    return out, ok and err <= 1e-5, rows


def cmd_harnack(args, g):
    import numpy as np
    from .estimates import harnack_check
    rng = np.random.default_rng(args.seed)
    tuples = []
    for _ in range(args.samples):
        t = float(rng.uniform(0.1, 3.0))
        s = t + float(rng.uniform(0.1, 3.0))
        x, y, z = (int(v) for v in rng.integers(0, g.n, 3))
        tuples.append((t, s, x, y, z))
    return _merge([harnack_check(g, args.n, tuples, D=args.D, tol=args.tol)])


def cmd_expint(args, g):
    from .estimates import exp_integrability
    try:
        rep = exp_integrability(g, _vertex(g, args.x), args.r, args.n, rho_target=args.rho)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return _merge([rep])


def cmd_doubling(args, g):
    from .estimates import doubling_report
    centers = _names(g, args.centers)
    return _merge([doubling_report(g, centers, args.rmax)])


def cmd_gaussian(args, g):
    from .estimates import gaussian_fit
    from .graph import GraphError
    try:
        rep = gaussian_fit(g, args.nmax, sources=_names(g, args.sources))
    except GraphError as exc:
        raise InputError(str(exc)) from exc
    return _merge([rep])


def cmd_poincare(args, g):
    from .estimates import poincare_constant
    from .graph import GraphError
    try:
        reps = [poincare_constant(g, _vertex(g, args.x), _positive("--r", r)) for r in args.r]
    except GraphError as exc:
        raise InputError(str(exc)) from exc
    return _merge(reps)


def _profile(args, Z):
    from .positive import LsiProfile
    try:
        return LsiProfile(args.n, args.K * Z)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_lsi(args, g):
    import numpy as np
    from .positive import lsi_check, normalize_probability
    gp, Z = normalize_probability(g)
    prof = _profile(args, Z)
    rng = np.random.default_rng(args.seed)
    fs = rng.random((args.samples, g.n))
    out, ok, rows = _merge([lsi_check(gp, fs, prof, tol=args.tol)])
    out["normalization"] = Z
    return out, ok, rows


def cmd_decay(args, g):
    import numpy as np
    from .positive import decay_check, normalize_probability
    gp, Z = normalize_probability(g)
    prof = _profile(args, Z)
    rng = np.random.default_rng(args.seed)
    fs = rng.random((args.samples, g.n))
    grid = np.linspace(args.t0, args.t0 + args.span, 21)
    out, ok, rows = _merge([decay_check(gp, fs, prof, args.t0, grid, tol=args.tol)])
    out["normalization"] = Z
    return out, ok, rows


def cmd_diameter(args, g):
    from .graph import graph_metrics
    from .positive import diameter_bounds
    dmu = args.dmu
    hops = None
    if g is not None:
        m = graph_metrics(g)
        dmu = m.d_mu if dmu is None else dmu
        hops = m.diameter_hops
    if dmu is None:
        raise InputError("give --dmu or --graph")
    try:
        rep = diameter_bounds(args.n, args.K, dmu)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    b = rep.bound_values
    ok = b["quadrature_relative_gap"] <= 1e-6
    out = {"bounds": b, "D_mu": dmu}
    if hops is not None:
        out["hop_diameter"] = hops
        ok = ok and hops <= b["hop_diameter_bound"]
    return out, ok, []


COMMANDS = {
    "metrics": cmd_metrics, "curvature": cmd_curvature, "heat": cmd_heat,
    "liyau": cmd_liyau, "variational": cmd_variational, "harnack": cmd_harnack,
    "expint": cmd_expint, "doubling": cmd_doubling, "gaussian": cmd_gaussian,
    "poincare": cmd_poincare, "lsi": cmd_lsi, "diameter": cmd_diameter, "decay": cmd_decay,
}


def _config(args):
    skip = {"out", "csv"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(doc, path):
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "param", "lhs", "rhs", "residual"])
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def run(argv=None):
    """Parse ``argv``, run one subcommand and return the exit status."""
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InputError as exc:
        _emit({"schema": SCHEMA, "version": __version__, "pass": False,
               "error": {"type": "usage", "message": str(exc)}}, None)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.measure is None:
        args.measure = "degree" if args.command in DEGREE_DEFAULT else "unit"
    doc = {"schema": SCHEMA, "version": __version__, "command": args.command,
           "seed": args.seed, "config": _config(args)}
    try:
        if getattr(args, "tol", 1.0) <= 0:
            raise InputError("--tol must be positive")
        g = _load(args, required=args.command != "diameter")
        doc["graph_hash"] = g.content_hash if g is not None else None
        report, ok, rows = COMMANDS[args.command](args, g)
    except InputError as exc:
        doc["error"] = {"type": "input", "message": str(exc)}
        doc["pass"] = False
        _emit(doc, args.out)
        return EXIT_INPUT
    doc["report"] = report
    doc["pass"] = bool(ok)
    _emit(doc, args.out)
    if args.csv:
        _write_csv(args.csv, rows)
    return EXIT_OK if ok else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
