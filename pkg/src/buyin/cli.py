"""Command-line entry point.

Exit codes: 0 success, 2 infeasible instance, 3 numerical failure, 4 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .bnb import DEFAULT_GAP_TOL, bnb_report, bnb_solve
from .dca import DEFAULT_EPS, DEFAULT_T, DcaConfig, InitStrategy, solve_with_escalation
from .errors import BuyinError, InfeasibleInstanceError, InvalidInputError, NumericalFailureError
from .frontier import FORMATS, SOLVERS, emit_table, solve_report, sweep
from .ingest import (
    asset_statistics,
    compute_returns,
    load_meanstd_correlation,
    load_statistics,
    read_price_csv,
    save_statistics,
)
from .model import MixedPoint, classify, load_instance, require_reachable, save_instance
from .oracle import brute_force, random_instance
from .report import SolveReport

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_BAD_INPUT = 4

_STATUS_EXIT = {"infeasible": EXIT_INFEASIBLE, "numerical_failure": EXIT_NUMERICAL}


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _dca_config(args) -> DcaConfig:
    return DcaConfig(t=args.t, eps=args.eps, init_strategy=InitStrategy(args.init),
                     escalate=args.escalate)


def _add_dca_options(p: argparse.ArgumentParser):
    p.add_argument("--t", type=float, default=DEFAULT_T, help="penalty weight")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="stopping tolerance")
    p.add_argument("--init", choices=[s.value for s in InitStrategy], default="rounded")
    p.add_argument("--escalate", type=_on_off, default=True, metavar="on|off")


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    require_reachable(inst)
    if args.solver == "dca":
        pt, report = solve_with_escalation(inst, _dca_config(args))
        if args.trace:
            Path(args.trace).write_text(report.traces[-1].to_csv())
    elif args.solver == "bnb":
        res = bnb_solve(inst, gap_tol=args.gap_tol)
        if args.node_log:
            Path(args.node_log).write_text(res.node_log_csv())
        if res.best_point is None:
            raise InfeasibleInstanceError("no buy-in feasible portfolio exists")
        pt, report = res.best_point, bnb_report(inst, res, {"gap_tol": args.gap_tol})
    else:
        clock = time.perf_counter()
        res = brute_force(inst)
        pt = MixedPoint(res.y, res.z)
        report = SolveReport(inst.R, "oracle", res.value, res.supports_solved,
                             time.perf_counter() - clock, "optimal")
    out = report.to_dict() | {"y": pt.y.tolist(), "z": pt.z.tolist(),
                              "feasibility": classify(pt, inst).value}
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_frontier(args) -> int:
    stats = load_statistics(args.stats)
    solvers = [s for s in args.solvers.split(",") if s]
    reports = sweep(stats, args.returns, args.a, args.b, solvers, _dca_config(args),
                    workers=args.workers)
    _write(emit_table(reports, args.format), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.prices:
        stats = asset_statistics(compute_returns(read_price_csv(args.prices), args.kind))
    else:
        stats = load_meanstd_correlation(args.orlib)
    if args.out:
        save_statistics(stats, args.out)
    else:
        sys.stdout.write(json.dumps(stats.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_gen(args) -> int:
    inst = random_instance(args.n, args.seed, args.a, args.b)
    if args.out:
        save_instance(inst, args.out)
    else:
        sys.stdout.write(json.dumps(inst.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    inst = load_instance(args.instance)
    require_reachable(inst)
    solvers = ["dca", "bnb"] + (["oracle"] if inst.n <= args.oracle_limit else [])
    reports = {s: solve_report(inst, s, _dca_config(args)) for s in solvers}
    for rep in reports.values():
        if rep.status in _STATUS_EXIT:
            print(f"{rep.solver}: {rep.status}: {rep.message}", file=sys.stderr)
            return _STATUS_EXIT[rep.status]
    best = reports["oracle" if "oracle" in reports else "bnb"].value
    print(f"R = {inst.R:.6g}, n = {inst.n}")
    print(f"{'solver':<8}{'value':>16}{'gap':>12}{'iter':>8}{'CPU':>10}")
    for rep in reports.values():
        gap = rep.value - best
        print(f"{rep.solver:<8}{rep.value:>16.10g}{gap:>12.3g}{rep.iterations:>8}{rep.cpu_seconds:>10.3f}")
    if "oracle" not in reports:
        print(f"(oracle skipped: n > {args.oracle_limit})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="buyin", description="Portfolio selection with buy-in thresholds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--solver", choices=SOLVERS, default="dca")
    _add_dca_options(p)
    p.add_argument("--gap-tol", type=float, default=DEFAULT_GAP_TOL)
    p.add_argument("--trace", help="write the DCA trace (last run) as CSV")
    p.add_argument("--node-log", help="write the branch-and-bound node log as CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("frontier", help="sweep target returns")
    p.add_argument("--stats", required=True)
    p.add_argument("--a", type=float, default=0.05)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--returns", type=_float_list, required=True)
    p.add_argument("--solvers", default="dca,bnb")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    _add_dca_options(p)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("stats", help="estimate or convert asset statistics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--prices", help="CSV of prices: header of names, first column a date")
    src.add_argument("--orlib", help="text file: n, mean/stddev lines, correlation triples")
    p.add_argument("--kind", choices=("arithmetic", "log"), default="arithmetic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", help="write a seeded random instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--a", type=float, default=0.05)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compare", help="run all solvers on one instance and report gaps")
    p.add_argument("--instance", required=True)
    p.add_argument("--oracle-limit", type=int, default=12, help="largest n for enumeration")
    _add_dca_options(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        return args.func(args)
    except InfeasibleInstanceError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidInputError, BuyinError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
