"""Best-first branch-and-bound for the mixed zero-one portfolio problem.

Lower bounds come from the continuous relaxation (``0 <= z_i <= 1``) at each
node; branching fixes one indicator to 0 or 1. The most fractional indicator
is branched on, and open nodes are explored in order of their parent's bound.
"""

from __future__ import annotations

import heapq
import io
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .dca import polytope_qp
from .errors import InvalidInputError, NumericalFailureError
from .model import MixedPoint, PortfolioInstance, objective_V
from .qp import QpSolution, QpStatus, solve_qp_tight
from .report import SolveReport

INTEGRALITY_TOL = 1e-6
DEFAULT_GAP_TOL = 1e-9
DEFAULT_NODE_LIMIT = 100_000
# bounds must be accurate well below the pruning gap
DEFAULT_QP_TOL = 1e-10


@dataclass
class BnbNode:
    fixed_zero: frozenset = frozenset()
    fixed_one: frozenset = frozenset()
    lower_bound: float = -np.inf
    relaxation_point: MixedPoint | None = None
    node_id: int = 0
    parent: int | None = None
    branch: str = ""

    def __post_init__(self):
        self.fixed_zero = frozenset(self.fixed_zero)
        self.fixed_one = frozenset(self.fixed_one)
        if self.fixed_zero & self.fixed_one:
            raise InvalidInputError("an asset cannot be fixed both in and out")


@dataclass
class NodeLogEntry:
    node_id: int
    parent: int | None
    branch: str
    lower_bound: float
    incumbent: float
    outcome: str


@dataclass
class BnbResult:
    best_point: MixedPoint | None
    best_value: float
    nodes_explored: int
    status: str  # "proved_optimal" | "infeasible" | "node_limit"
    log: list[NodeLogEntry] = field(default_factory=list)
    incumbents: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def node_log_csv(self) -> str:
        buf = io.StringIO()
        buf.write("node,parent,branch,lower_bound,incumbent,outcome\n")
        for e in self.log:
            parent = "" if e.parent is None else e.parent
            buf.write(f"{e.node_id},{parent},{e.branch},{e.lower_bound:.17g},"
                      f"{e.incumbent:.17g},{e.outcome}\n")
        return buf.getvalue()


def lift_indicators(inst: PortfolioInstance, y: np.ndarray, fixed_zero=(), fixed_one=(),
                    zero_tol: float = 1e-9) -> np.ndarray:
    """Pick the largest feasible ``z`` for given relaxed weights.

    The relaxation's objective does not involve ``z``, so any ``z`` with
    ``y_i / b_i <= z_i <= min(1, y_i / a_i)`` is equally optimal. Choosing the
    upper end makes ``z_i`` integral whenever ``y_i`` is 0 or at least ``a_i``.
    """
    z = np.where(y <= zero_tol, 0.0, np.minimum(1.0, y / inst.a))
    z[list(fixed_zero)] = 0.0
    z[list(fixed_one)] = 1.0
    return z


def node_relaxation(inst: PortfolioInstance, node: BnbNode, tol: float = DEFAULT_QP_TOL) -> QpSolution:
    """Solve the relaxation at ``node`` with its fixings as equality rows."""
    return solve_qp_tight(polytope_qp(inst, None, node.fixed_zero, node.fixed_one), tol)


def fractionality(z: np.ndarray) -> np.ndarray:
    return np.minimum(z, 1.0 - z)


def select_branch_variable(z: np.ndarray, tol: float = INTEGRALITY_TOL) -> int:
    """Index of the most fractional indicator (smallest index on ties)."""
    frac = fractionality(np.asarray(z, dtype=float))
    i = int(np.argmax(frac))
    if frac[i] <= tol:
        raise InvalidInputError("no fractional indicator to branch on")
    return i


def bnb_solve(
    inst: PortfolioInstance,
    gap_tol: float = DEFAULT_GAP_TOL,
    node_limit: int = DEFAULT_NODE_LIMIT,
    incumbent: MixedPoint | None = None,
    qp_tol: float = DEFAULT_QP_TOL,
) -> BnbResult:
    """Solve the mixed zero-one problem to proven optimality.

    Parameters
    ----------
    inst : PortfolioInstance
    gap_tol : float
        Absolute pruning gap: nodes whose bound is within ``gap_tol`` of the
        incumbent are discarded.
    node_limit : int
        Maximum number of node relaxations to solve.
    incumbent : MixedPoint, optional
        A feasible point (e.g. from DCA) used as the initial upper bound.
        By default incumbents only come from integral relaxations.
    """
    clock = time.perf_counter()
    best_point, best_value = None, np.inf
    incumbents: list[float] = []
    if incumbent is not None:
        best_point, best_value = incumbent, objective_V(incumbent.y, inst)
        incumbents.append(best_value)

    counter = itertools.count()
    root = BnbNode(node_id=next(counter))
    heap = [(-np.inf, root.node_id, root)]
    log: list[NodeLogEntry] = []
    explored = 0
    status = "proved_optimal"

    while heap:
        key, _, node = heapq.heappop(heap)
        if key >= best_value - gap_tol:
            log.append(NodeLogEntry(node.node_id, node.parent, node.branch, key, best_value, "pruned"))
            continue
        if explored >= node_limit:
            status = "node_limit"
            break
        explored += 1
        sol = node_relaxation(inst, node, qp_tol)
        if sol.status is QpStatus.INFEASIBLE:
            log.append(NodeLogEntry(node.node_id, node.parent, node.branch, np.inf, best_value, "infeasible"))
            continue
        if sol.status is not QpStatus.OPTIMAL:
            raise NumericalFailureError(f"node {node.node_id} relaxation failed: {sol.message}")
        n = inst.n
        y = sol.x[:n]
        z = lift_indicators(inst, y, node.fixed_zero, node.fixed_one)
        node.lower_bound = sol.objective
        node.relaxation_point = MixedPoint(y, z)

        if node.lower_bound >= best_value - gap_tol:
            outcome = "pruned"
        elif np.max(fractionality(z), initial=0.0) <= INTEGRALITY_TOL:
            best_point = MixedPoint(y, np.round(z))
            best_value = objective_V(y, inst)
            incumbents.append(best_value)
            outcome = "incumbent"
        else:
            i = select_branch_variable(z)
            for fz, fo, label in (
                (node.fixed_zero | {i}, node.fixed_one, f"z{i + 1}=0"),
                (node.fixed_zero, node.fixed_one | {i}, f"z{i + 1}=1"),
            ):
                child = BnbNode(fz, fo, node.lower_bound, None, next(counter), node.node_id, label)
                heapq.heappush(heap, (node.lower_bound, child.node_id, child))
            outcome = "branched"
        log.append(NodeLogEntry(node.node_id, node.parent, node.branch, node.lower_bound,
                                best_value, outcome))

    if status == "proved_optimal" and best_point is None:
        status = "infeasible"
    return BnbResult(best_point, best_value, explored, status, log, incumbents,
                     time.perf_counter() - clock)


def bnb_report(inst: PortfolioInstance, result: BnbResult, config: dict | None = None) -> SolveReport:
    value = result.best_value if result.best_point is not None else None
    return SolveReport(
        R=inst.R,
        solver="bnb",
        value=value,
        iterations=result.nodes_explored,
        cpu_seconds=result.seconds,
        status=result.status,
        config=dict(config or {}),
    )
