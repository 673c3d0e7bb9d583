"""Exhaustive ground truth for small instances.

Every nonempty support ``S`` fixes ``z`` completely, leaving the convex QP

    min y'Qy  s.t.  r'y = R, sum(y) = 1, a_i <= y_i <= b_i (i in S), y_i = 0 otherwise.

Enumerating all ``2^n - 1`` supports is slow but shares no code with the tree
search, which is the point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleInstanceError, InvalidInputError, NumericalFailureError
from .model import PortfolioInstance, return_range
from .qp import QpProblem, QpStatus, solve_qp_tight

DEFAULT_SUPPORT_LIMIT = 20
TIE_TOL = 1e-12
QP_TOL = 1e-10


@dataclass(frozen=True)
class SupportSolution:
    y: np.ndarray
    value: float


@dataclass(frozen=True)
class OracleResult:
    y: np.ndarray
    z: np.ndarray
    value: float
    supports_solved: int


def fixed_support_qp(inst: PortfolioInstance, support, tol: float = 1e-9) -> SupportSolution | None:
    """Optimal weights with the invested set fixed to ``support`` (0-based).

    Returns ``None`` when the support admits no feasible weights.
    """
    S = np.array(sorted(set(int(i) for i in support)), dtype=int)
    if S.size == 0:
        return None
    if S.min() < 0 or S.max() >= inst.n:
        raise InvalidInputError(f"support index out of range for n={inst.n}")
    a, b, r = inst.a[S], inst.b[S], inst.r[S]
    lo, hi = return_range(r, a, b)
    if not (lo - tol <= inst.R <= hi + tol):
        return None

    k = S.size
    if k == 1:
        # the budget row pins the single weight at 1
        y = np.zeros(inst.n)
        y[S] = 1.0
        return SupportSolution(y, float(inst.Q[S[0], S[0]]))
    prob = QpProblem(
        inst.Q[np.ix_(S, S)], np.zeros(k),
        np.vstack([r, np.ones(k)]), [inst.R, 1.0],
        np.vstack([-np.eye(k), np.eye(k)]), np.concatenate([-a, b]),
        check_psd=False,
    )
    sol = solve_qp_tight(prob, QP_TOL)
    if sol.status is QpStatus.INFEASIBLE:
        return None
    if sol.status is not QpStatus.OPTIMAL:
        raise NumericalFailureError(f"support {S.tolist()}: {sol.message}")
    y = np.zeros(inst.n)
    y[S] = sol.x
    return SupportSolution(y, float(y @ inst.Q @ y))


def brute_force(
    inst: PortfolioInstance,
    support_limit: int = DEFAULT_SUPPORT_LIMIT,
    fixed_zero=(),
    fixed_one=(),
) -> OracleResult:
    """Global optimum by enumerating supports.

    ``fixed_zero``/``fixed_one`` restrict the enumeration to supports that
    exclude/include the given assets, which yields the optimum of a subtree
    of the branch-and-bound search. Ties within ``1e-12`` go to the
    lexicographically smallest ``z``.
    """
    n = inst.n
    if n > support_limit:
        raise InvalidInputError(f"n={n} exceeds the enumeration limit {support_limit}")
    fixed_zero, fixed_one = set(fixed_zero), set(fixed_one)
    free = [i for i in range(n) if i not in fixed_zero and i not in fixed_one]

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    solved = 0
    # itertools.product over (0, 1) walks z in lexicographic order
    for bits in itertools.product((0, 1), repeat=len(free)):
        z = np.zeros(n)
        z[list(fixed_one)] = 1.0
        z[free] = bits
        support = np.flatnonzero(z)
        if support.size == 0:
            continue
        sol = fixed_support_qp(inst, support)
        solved += 1
        if sol is None:
            continue
        if best is None or sol.value < best[0] - TIE_TOL:
            best = (sol.value, sol.y, z)
    if best is None:
        raise InfeasibleInstanceError(f"no feasible support for R={inst.R:.6g}")
    value, y, z = best
    return OracleResult(y, z, value, solved)


def random_instance(n: int, seed: int, a: float = 0.05, b: float = 1.0) -> PortfolioInstance:
    """Seeded random test instance.

    ``Q = F F'/k + 1e-6 I`` with ``F`` an ``n x k`` standard normal factor
    matrix, ``k = max(2, n // 2)``; returns uniform on ``[-0.005, 0.01]``.
    The target ``R`` is drawn from the middle 80% of ``[min r, max r]``, so
    mixing the lowest- and highest-return assets (each weight >= 0.1)
    always reaches it.
    """
    if n < 2:
        raise InvalidInputError("random instances need n >= 2")
    rng = np.random.default_rng(seed)
    k = max(2, n // 2)
    F = rng.standard_normal((n, k))
    Q = F @ F.T / k + 1e-6 * np.eye(n)
    Q = 0.5 * (Q + Q.T)
    r = rng.uniform(-0.005, 0.01, size=n)
    lo, hi = r.min(), r.max()
    R = lo + (hi - lo) * rng.uniform(0.1, 0.9)
    return PortfolioInstance(r, Q, R, a, b, meta={"generator": "factor", "n": n, "seed": seed})
