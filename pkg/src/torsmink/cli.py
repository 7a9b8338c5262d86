"""Command-line front end.

Exit codes: 0 success, 1 input or configuration error, 2 numerical
non-convergence or a failed check/row.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .errors import InvalidInput, MaxItersExceeded, PCritical, TorsminkError
from .geometry import regular_polygon, wulff_shape
from .solver import N_PLUS_2, SolveConfig, solve_normalized, solve_original
from .torsion import facet_torsion_measure, lp_measure, solve_torsion
from .mesh import triangulate

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
SUITES = ("identities", "hadamard", "bm", "minkowski", "uniqueness", "weak")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors are input errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _solve_config(args, p=None) -> SolveConfig:
    return SolveConfig(
        p=args.p if p is None else p, mesh_h=args.mesh_h, tol_residual=args.tol,
        max_iters=args.max_iters, seed=args.seed, polish_iters=args.polish,
    )


def _add_solver_flags(sp, p_required=True):
    sp.add_argument("--p", type=float, required=p_required, help="exponent p > 1")
    sp.add_argument("--mesh-h", type=float, default=0.02, help="target mesh size (default 0.02)")
    sp.add_argument("--tol", type=float, default=1e-2, help="residual tolerance (default 1e-2)")
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--polish", type=int, default=0,
                    help="extra descent steps after the tolerance is met")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="torsmink", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("solve", help="solve the original (default) or normalized problem")
    sp.add_argument("measure", help="measure JSON file")
    _add_solver_flags(sp)
    sp.add_argument("--normalized", action="store_true", help="solve the normalized problem")
    sp.add_argument("--out", help="report path (default stdout)")

    sp = sub.add_parser("torsion", help="rigidity and torsion measure of a polygon")
    sp.add_argument("polygon", help="polygon JSON file")
    sp.add_argument("--mesh-h", type=float, default=0.02)
    sp.add_argument("--p", type=float, help="also report the L_p torsion measure")
    sp.add_argument("--dump-mesh", metavar="PATH", help="write the mesh as JSON")
    sp.add_argument("--out")

    sp = sub.add_parser("wulff", help="Wulff shape of a measure's normals")
    sp.add_argument("measure", help="measure JSON file (weights are ignored)")
    sp.add_argument("--y", type=_float_list, help="support numbers, comma-separated (default all 1)")
    sp.add_argument("--out")

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("suite", help="one of " + ", ".join(SUITES))
    sp.add_argument("inputs", nargs="*", help="polygon or measure files, per suite")
    sp.add_argument("--pair", nargs=2, metavar=("P0", "P1"), help="polygon pair")
    sp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sp.add_argument("--k", type=int, default=8, help="starts for the uniqueness probe")
    sp.add_argument("--limit", help="limit polygon for the weak-convergence probe")
    sp.add_argument("--t-list", type=_float_list, help="difference steps for the Hadamard check")
    sp.add_argument("--point", type=_float_list, help="use this point as the second body (hadamard)")
    _add_solver_flags(sp, p_required=False)
    sp.add_argument("--out")

    sp = sub.add_parser("continuity", help="continuity experiment in the measure or in p")
    sp.add_argument("measure", help="measure JSON file")
    sp.add_argument("--mode", choices=("measure", "p"), required=True)
    _add_solver_flags(sp)
    sp.add_argument("--eps", type=_float_list, help="weight perturbation sizes (mode measure)")
    sp.add_argument("--index", type=int, default=0, help="atom whose weight is perturbed")
    sp.add_argument("--jitter", type=_float_list, help="normal jitter sizes in radians (mode measure)")
    sp.add_argument("--p-seq", type=_float_list, help="p schedule (mode p)")
    sp.add_argument("--out", help="CSV table path (default stdout)")
    sp.add_argument("--json", help="JSON summary path")
    return ap


def cmd_solve(args) -> int:
    m = io.read_measure(args.measure)
    if not args.normalized and args.p == N_PLUS_2:
        raise PCritical(f"p equals n+2 = {N_PLUS_2}; use --normalized")
    cfg = _solve_config(args)
    try:
        report = solve_normalized(m, cfg) if args.normalized else solve_original(m, cfg)
    except MaxItersExceeded as e:
        if e.report is not None:
            io.write_json(e.report.to_json(), args.out)
        print(f"torsmink: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    io.write_json(report.to_json(), args.out)
    return EXIT_OK


def cmd_torsion(args) -> int:
    P = io.read_polygon(args.polygon)
    mesh = triangulate(P, args.mesh_h)
    if args.dump_mesh:
        mesh.dump(args.dump_mesh)
    f = solve_torsion(mesh)
    d = facet_torsion_measure(f, P, tol=None)
    out = {
        "T": d.T,
        "area": d.area,
        "support_residual": d.support_residual,
        "divergence_residual": d.divergence_residual,
        "facets": [
            {"normal": n.tolist(), "h": float(h), "length": float(l), "mu": float(mu)}
            for n, h, l, mu in zip(d.normals, d.supports, d.lengths, d.facet_measures)
        ],
        "diagnostics": d.diagnostics,
    }
    if args.p is not None:
        out["lp_measure"] = lp_measure(d, P, args.p)
    io.write_json(out, args.out)
    return EXIT_OK


def cmd_wulff(args) -> int:
    m = io.read_measure(args.measure)
    y = np.ones(len(m)) if args.y is None else np.asarray(args.y)
    if len(y) != len(m):
        raise InvalidInput(f"--y has {len(y)} entries, the measure has {len(m)} normals")
    io.write_json(io.polygon_to_json(wulff_shape(m.normals, y)), args.out)
    return EXIT_OK


def _pair(args):
    if args.pair:
        return io.read_polygon(args.pair[0]), io.read_polygon(args.pair[1])
    if len(args.inputs) == 2:
        return io.read_polygon(args.inputs[0]), io.read_polygon(args.inputs[1])
    raise InvalidInput("this suite needs a polygon pair (--pair P0 P1)")


def cmd_verify(args) -> int:
    from . import verify as V

    if args.suite not in SUITES:
        raise InvalidInput(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    ccfg = V.CheckConfig(mesh_h=args.mesh_h, seed=args.seed)
    if args.suite == "identities":
        if not args.inputs:
            raise InvalidInput("identities needs at least one polygon file")
        checks = []
        for path in args.inputs:
            checks += V.identity_suite(io.read_polygon(path), ccfg)
    elif args.suite == "hadamard":
        if args.point is not None:
            P0 = io.read_polygon(args.pair[0] if args.pair else args.inputs[0])
            P1 = np.asarray(args.point)
        else:
            P0, P1 = _pair(args)
        checks = [V.hadamard_check(P0, P1, args.t_list, ccfg)]
    elif args.suite == "bm":
        checks = [V.bm_check(*_pair(args), args.lam, ccfg)]
    elif args.suite == "minkowski":
        checks = [V.minkowski_ineq_check(*_pair(args), ccfg)]
    elif args.suite == "uniqueness":
        if len(args.inputs) != 1 or args.p is None:
            raise InvalidInput("uniqueness needs one measure file and --p")
        m = io.read_measure(args.inputs[0])
        checks = [V.uniqueness_probe(m, args.k, _solve_config(args), ccfg)]
    else:
        if args.inputs:
            if not args.limit:
                raise InvalidInput("weak needs --limit when a sequence is given")
            seq = [io.read_polygon(p) for p in args.inputs]
            limit = io.read_polygon(args.limit)
        else:
            seq = [regular_polygon(k) for k in (8, 16, 32)]
            limit = regular_polygon(64)
        checks = [V.weak_convergence_probe(seq, limit, V.regular_sequence_fns(), ccfg)]
    passed = all(c.passed for c in checks)
    io.write_json({"suite": args.suite, "passed": passed,
                   "checks": [c.to_json() for c in checks]}, args.out)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured {c.measured:.6g} "
              f"({c.relation} {c.bound:g}, tol {c.tolerance:g})", file=sys.stderr)
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_continuity(args) -> int:
    from . import verify as V

    m = io.read_measure(args.measure)
    cfg = _solve_config(args)
    if args.mode == "measure":
        if args.eps:
            perturbed = V.weight_perturbations(m, args.eps, args.index)
        elif args.jitter:
            perturbed = V.jitter_perturbations(m, args.jitter, args.seed)
        else:
            raise InvalidInput("mode measure needs a non-empty --eps or --jitter schedule")
        table = V.continuity_in_measure(m, perturbed, cfg)
    else:
        if not args.p_seq:
            raise InvalidInput("mode p needs a non-empty --p-seq schedule")
        if N_PLUS_2 in args.p_seq or args.p == N_PLUS_2:
            raise PCritical(f"p equals n+2 = {N_PLUS_2}")
        table = V.continuity_in_p(m, args.p_seq, cfg)
    io.write_text(table.to_csv(), args.out)
    if args.json:
        io.write_json(table.to_json(), args.json)
    for r in table.failed_rows:
        print(f"torsmink: row {r.i} failed: {r.error}", file=sys.stderr)
    return EXIT_OK if table.passed else EXIT_NUMERIC


COMMANDS = {
    "solve": cmd_solve,
    "torsion": cmd_torsion,
    "wulff": cmd_wulff,
    "verify": cmd_verify,
    "continuity": cmd_continuity,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except InvalidInput as e:
        print(f"torsmink: {e}", file=sys.stderr)
        return EXIT_INPUT
    except MaxItersExceeded as e:
        print(f"torsmink: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except TorsminkError as e:
        print(f"torsmink: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
