"""Sweep target returns and tabulate solver results.

Each ``(R, solver)`` pair is an independent solve, so sweeps can fan out over
worker processes; reports are re-sorted afterwards so the output does not
depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor

from .bnb import DEFAULT_GAP_TOL, bnb_report, bnb_solve
from .dca import DcaConfig, solve_with_escalation
from .errors import InfeasibleInstanceError, InvalidInputError, NumericalFailureError
from .ingest import AssetStatistics
from .model import PortfolioInstance, require_reachable
from .oracle import brute_force
from .report import SolveReport

SOLVERS = ("dca", "bnb", "oracle")
FORMATS = ("csv", "json", "markdown")

_CSV_FIELDS = ("R", "solver", "value", "iter", "CPU", "status", "init_seconds",
               "flagged", "message", "config")


def _ms(seconds: float) -> float:
    return round(seconds, 3)


def solve_report(inst: PortfolioInstance, solver: str, config: DcaConfig | None = None,
                 gap_tol: float = DEFAULT_GAP_TOL) -> SolveReport:
    """Run one solver on one instance and summarize it.

    An unreachable target return or a QP breakdown is reported through the
    ``status`` field ("infeasible", "numerical_failure") instead of raised.
    """
    if solver not in SOLVERS:
        raise InvalidInputError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    config = config or DcaConfig()
    snapshot = config.snapshot() if solver == "dca" else {"gap_tol": gap_tol} if solver == "bnb" else {}
    if "seed" in inst.meta:
        snapshot["seed"] = inst.meta["seed"]
    try:
        require_reachable(inst)
        if solver == "dca":
            _, report = solve_with_escalation(inst, config)
            report.config = report.config | snapshot
        elif solver == "bnb":
            report = bnb_report(inst, bnb_solve(inst, gap_tol=gap_tol), snapshot)
        else:
            clock = time.perf_counter()
            res = brute_force(inst)
            report = SolveReport(inst.R, "oracle", res.value, res.supports_solved,
                                 time.perf_counter() - clock, "optimal", snapshot)
    except InfeasibleInstanceError as exc:
        return SolveReport(inst.R, solver, None, 0, 0.0, "infeasible", snapshot, message=str(exc))
    except NumericalFailureError as exc:
        return SolveReport(inst.R, solver, None, 0, 0.0, "numerical_failure", snapshot, message=str(exc))
    report.cpu_seconds = _ms(report.cpu_seconds)
    report.init_seconds = _ms(report.init_seconds)
    report.traces = []
    return report


def _task(args) -> SolveReport:
    return solve_report(*args)


def sweep(
    statistics: AssetStatistics,
    R_list,
    a=0.05,
    b=1.0,
    solvers=("dca", "bnb"),
    config: DcaConfig | None = None,
    workers: int = 1,
    gap_tol: float = DEFAULT_GAP_TOL,
) -> list[SolveReport]:
    """Solve the buy-in problem for every target return and solver.

    Parameters
    ----------
    statistics : AssetStatistics
    R_list : sequence of float
        Target returns; must be nonempty.
    a, b : float or array_like
        Buy-in floors and caps.
    solvers : sequence of str
        Any of ``"dca"``, ``"bnb"``, ``"oracle"``. An empty sequence gives an
        empty result.
    config : DcaConfig, optional
    workers : int
        Process count; 1 runs in-line.

    Returns
    -------
    list of SolveReport
        One per ``(R, solver)``, sorted by ``R`` then solver name.
    """
    if not isinstance(statistics, AssetStatistics):
        raise InvalidInputError("statistics must be an AssetStatistics")
    R_list = [float(R) for R in R_list]
    if not R_list:
        raise InvalidInputError("R_list must be nonempty")
    solvers = list(solvers)
    for s in solvers:
        if s not in SOLVERS:
            raise InvalidInputError(f"unknown solver {s!r}; expected one of {SOLVERS}")
    # validates a, b and the covariance once, before any solve
    base = PortfolioInstance.from_statistics(statistics, R_list[0], a, b)
    tasks = [(base.with_return(R), s, config, gap_tol) for R in R_list for s in solvers]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_task, tasks))
    else:
        reports = [_task(t) for t in tasks]
    return sorted(reports, key=lambda rep: (rep.R, rep.solver))


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def emit_table(reports, fmt: str = "csv") -> str:
    """Render reports as text.

    ``csv`` and ``json`` hold one row per report with every field and parse
    back losslessly (see :func:`parse_table`). ``markdown`` is the wide
    layout for reading: one row per ``R`` with value, iter and CPU columns
    for each solver. Rows without a value (e.g. infeasible) leave the value
    cell empty.
    """
    reports = list(reports)
    if fmt == "json":
        return json.dumps([_row(rep) for rep in reports], indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO(newline="")
        # quote every cell: a bare carriage return in a message is otherwise left unquoted
        writer = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n",
                                quoting=csv.QUOTE_ALL)
        buf.write(",".join(_CSV_FIELDS) + "\n")
        for rep in reports:
            row = _row(rep)
            row["value"] = _fmt(row["value"])
            row["R"], row["CPU"] = _fmt(row["R"]), _fmt(row["CPU"])
            row["init_seconds"] = _fmt(row["init_seconds"])
            row["flagged"] = str(row["flagged"]).lower()
            row["config"] = json.dumps(row["config"], sort_keys=True)
            writer.writerow(row)
        return buf.getvalue()
    if fmt == "markdown":
        return _markdown(reports)
    raise InvalidInputError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _row(rep: SolveReport) -> dict:
    value = rep.value if rep.value is not None and math.isfinite(rep.value) else None
    return {
        "R": rep.R,
        "solver": rep.solver,
        "value": value,
        "iter": rep.iterations,
        "CPU": rep.cpu_seconds,
        "status": rep.status,
        "init_seconds": rep.init_seconds,
        "flagged": rep.flagged,
        "message": rep.message,
        "config": rep.config,
    }


def _from_row(row: dict) -> SolveReport:
    def num(x):
        return None if x in (None, "") else float(x)

    config = row.get("config") or {}
    if isinstance(config, str):
        config = json.loads(config)
    flagged = row.get("flagged", False)
    if isinstance(flagged, str):
        flagged = flagged.lower() == "true"
    return SolveReport(
        R=float(row["R"]),
        solver=str(row["solver"]),
        value=num(row.get("value")),
        iterations=int(row["iter"]),
        cpu_seconds=float(row["CPU"]),
        status=str(row["status"]),
        config=config,
        init_seconds=num(row.get("init_seconds")) or 0.0,
        flagged=bool(flagged),
        message=str(row.get("message") or ""),
    )


def parse_table(text: str, fmt: str = "csv") -> list[SolveReport]:
    """Inverse of :func:`emit_table` for the ``csv`` and ``json`` formats."""
    if fmt == "json":
        return [_from_row(row) for row in json.loads(text)]
    if fmt == "csv":
        return [_from_row(row) for row in csv.DictReader(io.StringIO(text, newline=""))]
    raise InvalidInputError(f"cannot parse format {fmt!r}")


def _markdown(reports: list[SolveReport]) -> str:
    solvers = sorted({rep.solver for rep in reports})
    by_key = {(rep.R, rep.solver): rep for rep in reports}
    header = ["R"]
    for s in solvers:
        header += [f"{s} value", f"{s} iter", f"{s} CPU"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for R in sorted({rep.R for rep in reports}):
        cells = [f"{R:g}"]
        for s in solvers:
            rep = by_key.get((R, s))
            if rep is None:
                cells += ["", "", ""]
                continue
            value = "" if rep.value is None else f"{rep.value:.6g}"
            cells += [value, str(rep.iterations), f"{rep.cpu_seconds:.3f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def relaxed_frontier(statistics: AssetStatistics, R_list, a=0.05, b=1.0) -> list[tuple[float, float | None]]:
    """Relaxation value at each target return (``None`` where unreachable).

    Convexity makes this curve non-decreasing to the right of the
    minimum-risk return, which the mixed zero-one frontier need not be.
    """
    from .dca import solve_relaxation
    from .qp import QpStatus

    base = PortfolioInstance.from_statistics(statistics, float(R_list[0]), a, b)
    out = []
    for R in R_list:
        sol = solve_relaxation(base.with_return(float(R)))
        out.append((float(R), sol.objective if sol.status is QpStatus.OPTIMAL else None))
    return out


__all__ = [
    "FORMATS",
    "SOLVERS",
    "emit_table",
    "parse_table",
    "relaxed_frontier",
    "solve_report",
    "sweep",
]
