"""DC algorithm for the penalized buy-in portfolio problem.

The penalized objective splits as ``g - h`` with

    g(y, z) = y'Qy + indicator_A(y, z),     h(y, z) = t * sum z_i (z_i - 1),

both convex. Each iteration linearizes ``h`` at the current ``z`` (its
gradient is ``(0, t(2z - 1))``) and minimizes the convex remainder over
``A``, which is a QP in ``(y, z)``. Iterates stop moving once
``||dy|| + ||dz|| <= eps``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InfeasibleInstanceError, NumericalFailureError
from .model import (
    FEASIBILITY_TOL,
    MixedPoint,
    PortfolioInstance,
    build_polytope,
    is_binary,
    objective_V,
    penalty_p,
    require_reachable,
)
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .report import SolveReport

DEFAULT_T = 0.01
DEFAULT_EPS = 1e-7
ROUNDING_THRESHOLD = 1e-6
_SPARSE_ABOVE = 100


class InitStrategy(enum.Enum):
    ROUNDED_RELAXED = "rounded"
    RELAXED = "relaxed"
    MIN_PENALTY = "minpenalty"


class StopReason(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class DcaConfig:
    t: float = DEFAULT_T
    eps: float = DEFAULT_EPS
    max_iter: int = 500
    init_strategy: InitStrategy = InitStrategy.ROUNDED_RELAXED
    escalate: bool = True
    escalation_factor: float = 2.0
    max_escalations: int = 10
    rounding_threshold: float = ROUNDING_THRESHOLD
    binary_tol: float = 1e-6
    qp_tol: float = 1e-8

    def __post_init__(self):
        # t == 0 is accepted as a degenerate override; escalation lifts it.
        if self.t < 0 or self.eps <= 0 or self.max_iter < 1:
            raise DomainError("need t >= 0, eps > 0 and max_iter >= 1")
        if self.escalation_factor <= 1:
            raise DomainError("escalation factor must exceed 1")
        if isinstance(self.init_strategy, str):
            object.__setattr__(self, "init_strategy", InitStrategy(self.init_strategy))

    def snapshot(self) -> dict:
        return {
            "t": self.t,
            "eps": self.eps,
            "max_iter": self.max_iter,
            "init": self.init_strategy.value,
            "escalate": self.escalate,
            "stop_norm": "euclidean",
        }


@dataclass
class DcaTrace:
    """Iterates of one DCA run; index 0 is the starting point."""

    t: float
    start_in_A: bool
    iterates: list[MixedPoint] = field(default_factory=list)
    F_values: list[float] = field(default_factory=list)
    p_values: list[float] = field(default_factory=list)
    dy_norms: list[float] = field(default_factory=list)
    dz_norms: list[float] = field(default_factory=list)
    stop_reason: StopReason = StopReason.MAX_ITER
    wall_time: float = 0.0

    @property
    def iter_count(self) -> int:
        """Number of convex subproblems solved."""
        return max(len(self.iterates) - 1, 0)

    def _record(self, pt: MixedPoint, F: float, p: float, dy: float, dz: float):
        self.iterates.append(pt)
        self.F_values.append(F)
        self.p_values.append(p)
        self.dy_norms.append(dy)
        self.dz_norms.append(dz)

    def descent_violations(self, slack: float = 1e-7) -> int:
        """Count steps where ``F`` rose by more than ``slack``.

        Steps leaving a start point outside ``A`` are exempt: descent is only
        guaranteed between points of ``A``.
        """
        first = 0 if self.start_in_A else 1
        F = np.asarray(self.F_values[first:])
        return int(np.sum(np.diff(F) > slack))

    def to_csv(self) -> str:
        lines = ["k,F,p,dy,dz"]
        for k, row in enumerate(zip(self.F_values, self.p_values, self.dy_norms, self.dz_norms)):
            lines.append(f"{k}," + ",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def subgradient_h(z: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient ``(u, v)`` of ``h(y, z) = t sum z_i (z_i - 1)``: ``u = 0``, ``v = t(2z - 1)``."""
    z = np.asarray(z, dtype=float)
    return np.zeros_like(z), t * (2.0 * z - 1.0)


def polytope_qp(
    inst: PortfolioInstance,
    z_linear: np.ndarray | None = None,
    fixed_zero=(),
    fixed_one=(),
    quadratic: bool = True,
) -> QpProblem:
    """QP over ``A`` in ``x = (y, z)``: ``min y'Qy + z_linear'z``.

    ``fixed_zero``/``fixed_one`` append equality rows ``z_i = 0``/``z_i = 1``
    (and ``y_i = 0`` for fixed-out assets). Inequality rows made redundant by
    a fixing are dropped: they would pin slacks at zero, leaving no strict
    interior for the interior-point method. With ``quadratic=False`` the
    objective is linear (used for the penalty-only start).
    """
    n = inst.n
    A = build_polytope(inst)
    H = np.zeros((2 * n, 2 * n))
    if quadratic:
        H[:n, :n] = inst.Q
    c = np.zeros(2 * n)
    if z_linear is not None:
        c[n:] = z_linear
    A_eq, b_eq, G, h = A.A_eq, A.b_eq, A.G, A.h
    zero, one = sorted(int(i) for i in fixed_zero), sorted(int(i) for i in fixed_one)
    if zero or one:
        fixes = [(n + i, 0.0) for i in zero] + [(i, 0.0) for i in zero] + [(n + i, 1.0) for i in one]
        rows = np.zeros((len(fixes), 2 * n))
        for k, (col, _) in enumerate(fixes):
            rows[k, col] = 1.0
        A_eq = np.vstack([A_eq, rows])
        b_eq = np.concatenate([b_eq, [v for _, v in fixes]])
        # row layout: lower coupling, upper coupling, z >= 0, z <= 1 (n rows each)
        drop = [k * n + i for i in zero for k in range(4)] + [k * n + i for i in one for k in (2, 3)]
        keep = np.setdiff1d(np.arange(4 * n), drop)
        G, h = G[keep], h[keep]
    if 2 * n > _SPARSE_ABOVE:
        G = sp.csr_matrix(G)
    return QpProblem(H, c, A_eq, b_eq, G, h, check_psd=False)


def build_subproblem(inst: PortfolioInstance, v: np.ndarray) -> QpProblem:
    """Convex subproblem ``min y'Qy - v'z`` over ``A``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("subgradient must be finite")
    return polytope_qp(inst, -v)


def _solve(prob: QpProblem, tol: float, what: str, trace=None) -> QpSolution:
    sol = solve_qp(prob, tol=tol)
    if sol.status is QpStatus.INFEASIBLE:
        raise InfeasibleInstanceError(f"{what} is infeasible: {sol.message}")
    if sol.status is not QpStatus.OPTIMAL:
        raise NumericalFailureError(f"{what} failed: {sol.message}", trace)
    return sol


def _point(x: np.ndarray) -> MixedPoint:
    n = x.size // 2
    return MixedPoint(x[:n], np.clip(x[n:], 0.0, 1.0))


def _run(inst, start: MixedPoint, t: float, eps: float, max_iter: int, qp_tol: float,
         quadratic: bool = True) -> tuple[MixedPoint, DcaTrace]:
    if np.any(start.z < -1e-9) or np.any(start.z > 1 + 1e-9):
        raise DomainError("starting z must lie in [0, 1]^n")
    weight = t if quadratic else 1.0
    polytope = build_polytope(inst)

    def F(pt):
        base = objective_V(pt.y, inst) if quadratic else 0.0
        return base + weight * penalty_p(pt.z, tol=1e-9)

    clock = time.perf_counter()
    pt = MixedPoint(start.y, np.clip(start.z, 0.0, 1.0))
    trace = DcaTrace(t=weight, start_in_A=polytope.contains(pt, FEASIBILITY_TOL))
    trace._record(pt, F(pt), penalty_p(pt.z, tol=1e-9), np.nan, np.nan)
    for _ in range(max_iter):
        _, v = subgradient_h(pt.z, weight)
        sol = _solve(polytope_qp(inst, -v, quadratic=quadratic), qp_tol, "DCA subproblem", trace)
        new = _point(sol.x)
        dy = float(np.linalg.norm(new.y - pt.y))
        dz = float(np.linalg.norm(new.z - pt.z))
        trace._record(new, F(new), penalty_p(new.z), dy, dz)
        pt = new
        if dy + dz <= eps:
            trace.stop_reason = StopReason.CONVERGED
            break
    trace.wall_time = time.perf_counter() - clock
    return pt, trace


def dca_solve(inst: PortfolioInstance, cfg: DcaConfig, start: MixedPoint) -> tuple[MixedPoint, DcaTrace]:
    """Run DCA from ``start`` with fixed penalty weight ``cfg.t``.

    ``start`` need not lie in ``A``; the first subproblem lands there.

    Raises
    ------
    InfeasibleInstanceError
        If a subproblem is infeasible (the target return is unreachable).
    NumericalFailureError
        If the QP engine fails; ``exc.trace`` holds the iterates so far.
    """
    return _run(inst, start, cfg.t, cfg.eps, cfg.max_iter, cfg.qp_tol)


def solve_relaxation(inst: PortfolioInstance, fixed_zero=(), fixed_one=(),
                     tol: float = 1e-8) -> QpSolution:
    """Continuous relaxation (``0 <= z <= 1``) with optional fixings."""
    return solve_qp(polytope_qp(inst, None, fixed_zero, fixed_one), tol=tol)


def initial_point(inst: PortfolioInstance, strategy: InitStrategy | str = InitStrategy.ROUNDED_RELAXED,
                  rho: float = ROUNDING_THRESHOLD, qp_tol: float = 1e-8) -> MixedPoint:
    """Starting point for DCA.

    ``ROUNDED_RELAXED`` solves the relaxation and sets every indicator above
    ``rho`` to one, keeping the relaxed weights. ``RELAXED`` returns the
    relaxed point as is. ``MIN_PENALTY`` runs the same linearization scheme on
    the penalty alone (linear subproblems) from the relaxed point.
    """
    strategy = InitStrategy(strategy)
    require_reachable(inst)
    sol = _solve(polytope_qp(inst), qp_tol, "relaxation")
    relaxed = _point(sol.x)
    if strategy is InitStrategy.RELAXED:
        return relaxed
    if strategy is InitStrategy.ROUNDED_RELAXED:
        return MixedPoint(relaxed.y, round_indicators(relaxed.z, rho))
    pt, _ = _run(inst, relaxed, 1.0, DEFAULT_EPS, 200, qp_tol, quadratic=False)
    return pt


def round_indicators(z: np.ndarray, rho: float = ROUNDING_THRESHOLD) -> np.ndarray:
    """Round every component above ``rho`` up to one, the rest down to zero."""
    return (np.asarray(z) > rho).astype(float)


def repair_point(inst: PortfolioInstance, pt: MixedPoint,
                 rho: float = ROUNDING_THRESHOLD) -> MixedPoint | None:
    """Binary point near a fractional one, with weights re-optimized on its support.

    Tries three roundings (``z >= 1/2``, ``y >= a/2``, ``z > rho``) and keeps the
    best feasible one. If none reaches the target return, supports one and then
    two flips away from the ``z > rho`` rounding are searched. Returns ``None``
    if nothing feasible is found.
    """
    from .oracle import fixed_support_qp

    def best_of(masks):
        best = None
        seen = set()
        for mask in masks:
            key = mask.tobytes()
            if key in seen or not mask.any():
                continue
            seen.add(key)
            sol = fixed_support_qp(inst, np.flatnonzero(mask))
            if sol is not None and (best is None or sol.value < best[0].value):
                best = (sol, mask)
        return best

    base = pt.z > rho
    best = best_of([pt.z >= 0.5, pt.y >= 0.5 * inst.a, base])
    frontier = [base]
    for _ in range(2):
        if best is not None:
            break
        flips = []
        for mask in frontier:
            for i in range(inst.n):
                m = mask.copy()
                m[i] = not m[i]
                flips.append(m)
        best = best_of(flips)
        frontier = flips
    if best is None:
        return None
    sol, mask = best
    return MixedPoint(sol.y, mask.astype(float))


def solve_with_escalation(inst: PortfolioInstance, cfg: DcaConfig | None = None,
                          start: MixedPoint | None = None) -> tuple[MixedPoint, SolveReport]:
    """DCA with penalty escalation until the indicators are binary.

    If the limit point has a fractional indicator, ``t`` is multiplied by the
    escalation factor and DCA restarts from that point, at most
    ``cfg.max_escalations`` times. A point still fractional afterwards is
    rounded, its weights are re-optimized on the rounded support, and the
    report is flagged. The returned ``z`` is exactly binary.
    """
    cfg = cfg or DcaConfig()
    clock = time.perf_counter()
    if start is None:
        start = initial_point(inst, cfg.init_strategy, cfg.rounding_threshold, cfg.qp_tol)
    init_seconds = time.perf_counter() - clock

    clock = time.perf_counter()
    t = cfg.t
    traces: list[DcaTrace] = []
    escalations = 0
    pt = start
    while True:
        pt, trace = _run(inst, pt, t, cfg.eps, cfg.max_iter, cfg.qp_tol)
        traces.append(trace)
        if is_binary(pt.z, cfg.binary_tol) or not cfg.escalate or escalations >= cfg.max_escalations:
            break
        t = t * cfg.escalation_factor if t > 0 else DEFAULT_T
        escalations += 1

    flagged = False
    message = ""
    if is_binary(pt.z, cfg.binary_tol):
        pt = MixedPoint(pt.y, np.round(pt.z))
    else:
        flagged = True
        pt = repair_point(inst, pt, cfg.rounding_threshold)
        if pt is None:
            raise NumericalFailureError("fractional DCA limit could not be repaired", traces[-1])
        # one more pass from the repaired point; keep it only if it stays binary and improves
        polished, trace = _run(inst, pt, t, cfg.eps, cfg.max_iter, cfg.qp_tol)
        traces.append(trace)
        if (is_binary(polished.z, cfg.binary_tol)
                and objective_V(polished.y, inst) < objective_V(pt.y, inst)):
            pt = MixedPoint(polished.y, np.round(polished.z))
        message = "indicators remained fractional; rounded and re-optimized"

    config = cfg.snapshot() | {"t_final": t, "escalations": escalations}
    report = SolveReport(
        R=inst.R,
        solver="dca",
        value=objective_V(pt.y, inst),
        iterations=sum(tr.iter_count for tr in traces),
        cpu_seconds=time.perf_counter() - clock,
        status=traces[-1].stop_reason.value,
        config=config,
        init_seconds=init_seconds,
        flagged=flagged,
        message=message,
        traces=traces,
    )
    return pt, report


__all__ = [
    "DcaConfig",
    "DcaTrace",
    "InitStrategy",
    "StopReason",
    "build_subproblem",
    "dca_solve",
    "initial_point",
    "polytope_qp",
    "repair_point",
    "round_indicators",
    "solve_relaxation",
    "solve_with_escalation",
    "subgradient_h",
]
