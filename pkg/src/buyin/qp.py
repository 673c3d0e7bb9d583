"""Convex quadratic programming by a primal-dual interior-point method.

Problems have the form::

    minimize    x'Hx + c'x
    subject to  A_eq x  = b_eq
                G x    <= h

The objective is *not* halved, so that ``H = Q`` reproduces the portfolio
variance ``y'Qy`` directly. Multipliers follow the sign convention

    2Hx + c + A_eq' y + G' z = 0,   z >= 0.

The solver is Mehrotra's predictor-corrector applied to the slack form
``Gx + s = h``. Once the iterates are close to optimal, an active-set polish
step solves the KKT system of the guessed active constraints directly, which
recovers vertex solutions to machine precision. Problems on which the method
stalls are handed to a phase-one linear program whose multipliers form a
Farkas certificate of infeasibility.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InvalidInputError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
DEFAULT_REG = 1e-10

_STALL_WINDOW = 20
_POLISH_START = 1e-6
_NEIGHBORHOOD = 1e-3
_PHASE1_PROX = 1e-8


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class KktResiduals(NamedTuple):
    """Infinity-norm KKT residuals of a primal-dual point."""

    stationarity: float
    primal: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass(frozen=True)
class FarkasCertificate:
    """Multipliers ``(eq, ineq)`` with ``ineq >= 0`` proving infeasibility.

    ``A_eq' eq + G' ineq`` is (numerically) zero while
    ``violation = -(b_eq' eq + h' ineq)`` is strictly positive.
    """

    eq: np.ndarray
    ineq: np.ndarray
    violation: float
    ray_residual: float


def _as_matrix(M, rows: int | None, cols: int, name: str):
    if M is None:
        return np.zeros((0 if rows is None else rows, cols))
    if sp.issparse(M):
        M = sp.csr_matrix(M, dtype=float)
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.size == 0:
            M = M.reshape(0, cols)
    if M.shape[1] != cols:
        raise InvalidInputError(f"{name} has {M.shape[1]} columns, expected {cols}")
    return M


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QpProblem:
    """A convex QP ``min x'Hx + c'x`` over linear equalities and inequalities.

    ``G`` may be a dense array or a scipy sparse matrix; everything else is
    dense. Box bounds are ordinary rows of ``G``.
    """

    H: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G: np.ndarray | sp.spmatrix | None = None
    h: np.ndarray | None = None
    check_psd: bool = field(default=True, compare=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        c = np.asarray(self.c, dtype=float).ravel()
        d = c.size
        if H.shape != (d, d):
            raise InvalidInputError(f"H has shape {H.shape}, expected {(d, d)}")
        if not np.all(np.isfinite(H)) or not np.all(np.isfinite(c)):
            raise InvalidInputError("H and c must be finite")
        if d and np.max(np.abs(H - H.T)) > 1e-12:
            raise InvalidInputError("H is not symmetric")
        if self.check_psd and d:
            lam = np.linalg.eigvalsh(H)[0]
            scale = max(np.max(np.abs(H)), 1e-300)
            if lam < -1e-9 * scale:
                raise InvalidInputError(f"H is not positive semidefinite (eigenvalue {lam:.3e})")

        A = _as_matrix(self.A_eq, None, d, "A_eq")
        if sp.issparse(A):
            A = A.toarray()
        b = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise InvalidInputError(f"A_eq has {A.shape[0]} rows but b_eq has {b.size} entries")
        G = _as_matrix(self.G, None, d, "G")
        h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        if G.shape[0] != h.size:
            raise InvalidInputError(f"G has {G.shape[0]} rows but h has {h.size} entries")

        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "A_eq", _frozen(A))
        object.__setattr__(self, "b_eq", _frozen(b))
        object.__setattr__(self, "G", G if sp.issparse(G) else _frozen(G))
        object.__setattr__(self, "h", _frozen(h))

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    @property
    def n_ineq(self) -> int:
        return self.h.size

    def objective(self, x: np.ndarray) -> float:
        return float(x @ self.H @ x + self.c @ x)

    def to_dict(self) -> dict:
        """JSON-friendly dump, mainly for reproducing solver reports."""
        G = self.G.toarray() if sp.issparse(self.G) else self.G
        return {
            "H": self.H.tolist(),
            "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "G": G.tolist(),
            "h": self.h.tolist(),
        }


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    objective: float
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    residuals: KktResiduals
    status: QpStatus
    iterations: int = 0
    dual_objective: float = float("nan")
    polished: bool = False
    regularization: float = DEFAULT_REG
    certificate: FarkasCertificate | None = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def check_kkt(problem: QpProblem, solution: QpSolution) -> KktResiduals:
    """Recompute KKT residuals of ``solution`` from the problem data alone.

    Stationarity is ``||2Hx + c + A'y + G'z||_inf``; primal feasibility the
    largest equality or positive inequality violation; complementarity
    ``max |z_i (h - Gx)_i|``.
    """
    return _residuals(problem, solution.x, solution.eq_duals, solution.ineq_duals)


def _residuals(problem: QpProblem, x, y, z) -> KktResiduals:
    G, A = problem.G, problem.A_eq
    grad = 2.0 * (problem.H @ x) + problem.c
    if A.shape[0]:
        grad = grad + A.T @ y
    if problem.n_ineq:
        grad = grad + G.T @ z
    stat = _inf_norm(grad)
    prim = _inf_norm(A @ x - problem.b_eq) if A.shape[0] else 0.0
    comp = 0.0
    if problem.n_ineq:
        gap = G @ x - problem.h
        prim = max(prim, float(np.max(gap, initial=0.0)))
        comp = _inf_norm(z * gap)
    return KktResiduals(stat, prim, comp)


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def _lu(K: np.ndarray):
    # exactly singular pivots surface as non-finite solves, which callers check
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(K, check_finite=False)


class _Ipm:
    """State of one interior-point run on ``min 1/2 x'Px + c'x`` (``P = 2H``)."""

    def __init__(self, problem: QpProblem, tol: float, max_iter: int, reg: float):
        self.problem = problem
        self.P = 2.0 * np.asarray(problem.H)
        self.c = problem.c
        self.A = problem.A_eq
        self.b = problem.b_eq
        self.G = problem.G
        self.h = problem.h
        self.tol = tol
        self.max_iter = max_iter
        self.reg = reg
        self.d, self.me, self.mi = problem.dim, problem.n_eq, problem.n_ineq
        self.sparse = sp.issparse(self.G)

    def _gram(self, w):
        if self.sparse:
            return (self.G.T @ sp.diags(w) @ self.G).toarray()
        return self.G.T @ (w[:, None] * self.G)

    def _factor(self, K11):
        d, me = self.d, self.me
        K = np.empty((d + me, d + me))
        K[:d, :d] = K11
        K[np.arange(d), np.arange(d)] += self.reg
        K[:d, d:] = self.A.T
        K[d:, :d] = self.A
        K[d:, d:] = -self.reg * np.eye(me)
        return _lu(K)

    def _start(self, x0):
        d, me = self.d, self.me
        G, h = self.G, self.h
        if x0 is None:
            lu = self._factor(self.P + self._gram(np.ones(self.mi)))
            rhs = np.concatenate([-self.c + G.T @ h, self.b])
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            x, y = sol[:d], sol[d:]
        else:
            x = np.asarray(x0, dtype=float).copy()
            y = np.zeros(me)
        s = h - G @ x
        z = -s.copy()
        if self.mi:
            lo = np.min(s)
            if lo <= 0:
                s += 1.0 - lo
            lo = np.min(z)
            if lo <= 0:
                z += 1.0 - lo
        return x, y, z, s

    def run(self, x0=None):
        P, c, A, b, G, h = self.P, self.c, self.A, self.b, self.G, self.h
        mi = self.mi
        x, y, z, s = self._start(x0)
        best_pinf = np.inf
        since_improved = 0
        last_polish_act = None
        reason = "iteration limit reached"
        it = 0
        for it in range(1, self.max_iter + 1):
            rd = P @ x + c + A.T @ y + G.T @ z
            rp = A @ x - b
            rg = G @ x + s - h
            mu = float(s @ z) / mi if mi else 0.0
            res_d = _inf_norm(rd)
            pinf = max(_inf_norm(rp), _inf_norm(rg))
            # the summed gap bounds the objective error; the max alone does not
            comp = float(s @ z) if mi else 0.0

            if mi and max(res_d, pinf, comp) <= _POLISH_START:
                act = z > s
                if last_polish_act is None or not np.array_equal(act, last_polish_act):
                    last_polish_act = act
                    polished = self._polish(x, y, z, act)
                    if polished is not None:
                        return polished + (it, True, "")
            if res_d <= self.tol and pinf <= self.tol and comp <= self.tol:
                if mi:
                    polished = self._polish(x, y, z, z > s)
                    if polished is not None:
                        return polished + (it, True, "")
                return x, y, z, "converged", it, False, ""

            if pinf < 0.999 * best_pinf:
                best_pinf = pinf
                since_improved = 0
            else:
                since_improved += 1
            if pinf > 1e3 * self.tol and since_improved >= _STALL_WINDOW:
                reason = "primal infeasibility stalled"
                break
            if max(_inf_norm(z), _inf_norm(y)) > 1e13:
                reason = "multipliers diverged"
                break

            try:
                w = z / s if mi else np.zeros(0)
                lu = self._factor(P + self._gram(w) if mi else P)
            except (np.linalg.LinAlgError, ValueError) as exc:
                reason = f"KKT factorization failed: {exc}"
                break

            def direction(rc):
                rhs_x = -rd - G.T @ (w * rg - rc / s) if mi else -rd
                sol = sla.lu_solve(lu, np.concatenate([rhs_x, -rp]), check_finite=False)
                dx, dy = sol[: self.d], sol[self.d :]
                if not mi:
                    return dx, dy, np.zeros(0), np.zeros(0)
                Gdx = G @ dx
                dz = w * (Gdx + rg) - rc / s
                ds = -rg - Gdx
                return dx, dy, dz, ds

            if not mi:
                dx, dy, _, _ = direction(np.zeros(0))
                x, y = x + dx, y + dy
                continue

            dx, dy, dz, ds = direction(s * z)
            alpha = min(1.0, _max_step(s, ds, z, dz))
            mu_aff = float((s + alpha * ds) @ (z + alpha * dz)) / mi
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            dx, dy, dz, ds = direction(s * z + ds * dz - sigma * mu)
            alpha = _neighborhood_step(s, ds, z, dz)
            if alpha < 0.1:
                # corrector stalled; fall back to a pure centering step
                dx, dy, dz, ds = direction(s * z - 0.5 * mu)
                alpha = _neighborhood_step(s, ds, z, dz)
            if not np.all(np.isfinite(dx)):
                reason = "non-finite search direction"
                break
            x, y, z, s = x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds
        return x, y, z, "failed", it, False, reason

    def _polish(self, x, y, z, act):
        """Solve the KKT system of the active set ``act`` by refinement from ``(x, y, z)``."""
        d, me = self.d, self.me
        idx = np.flatnonzero(act)
        Gact = self.G[idx]
        if self.sparse:
            Gact = Gact.toarray()
        B = np.vstack([self.A, Gact])
        m = B.shape[0]
        K = np.zeros((d + m, d + m))
        K[:d, :d] = self.P
        K[:d, d:] = B.T
        K[d:, :d] = B
        Kreg = K.copy()
        Kreg[np.arange(d), np.arange(d)] += self.reg
        Kreg[np.arange(d, d + m), np.arange(d, d + m)] -= self.reg
        try:
            lu = _lu(Kreg)
        except (np.linalg.LinAlgError, ValueError):
            return None
        rhs = np.concatenate([-self.c, self.b, self.h[idx]])
        sol = np.concatenate([x, y, z[idx]])
        for _ in range(8):
            r = rhs - K @ sol
            if _inf_norm(r) <= 1e-15 * max(1.0, _inf_norm(rhs)):
                break
            sol = sol + sla.lu_solve(lu, r, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        xp, yp, zact = sol[:d], sol[d : d + me], sol[d + me :]
        zscale = max(1.0, _inf_norm(zact))
        if zact.size and np.min(zact) < -1e-10 * zscale:
            return None
        zp = np.zeros(self.mi)
        zp[idx] = np.maximum(zact, 0.0)
        res = _residuals(self.problem, xp, yp, zp)
        if res.max() > self.tol:
            return None
        return xp, yp, zp, "polished"


def _neighborhood_step(s, ds, z, dz) -> float:
    """Fraction-to-boundary step, shortened until the new point is acceptable.

    Acceptable means ``min(s*z) >= gamma * mean(s*z)`` (a wide neighborhood
    of the central path) and a mean complementarity that actually dropped.
    Without both, plain Mehrotra steps can cycle.
    """
    mu = float(np.mean(s * z))
    alpha = min(1.0, 0.99 * _max_step(s, ds, z, dz))
    while alpha > 1e-10:
        prod = (s + alpha * ds) * (z + alpha * dz)
        mu_new = float(np.mean(prod))
        if np.min(prod) >= _NEIGHBORHOOD * mu_new and mu_new <= (1.0 - 0.01 * alpha) * mu:
            break
        alpha *= 0.8
    return alpha


def _max_step(s, ds, z, dz) -> float:
    """Largest step keeping ``s`` and ``z`` nonnegative."""
    alpha = np.inf
    neg = ds < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-s[neg] / ds[neg])))
    neg = dz < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-z[neg] / dz[neg])))
    return alpha


def _phase_one(problem: QpProblem, tol: float, max_iter: int, reg: float):
    """Minimize total constraint violation; its multipliers are a Farkas ray."""
    d, me, mi = problem.dim, problem.n_eq, problem.n_ineq
    nv = d + 2 * me + mi
    H = np.zeros((nv, nv))
    H[np.arange(d), np.arange(d)] = _PHASE1_PROX
    c = np.concatenate([np.zeros(d), np.ones(2 * me + mi)])
    A = np.hstack([problem.A_eq, -np.eye(me), np.eye(me), np.zeros((me, mi))])
    G = problem.G.toarray() if sp.issparse(problem.G) else problem.G
    G1 = np.hstack([G, np.zeros((mi, 2 * me)), -np.eye(mi)])
    G2 = np.hstack([np.zeros((2 * me + mi, d)), -np.eye(2 * me + mi)])
    aux = QpProblem(
        H, c, A, problem.b_eq, np.vstack([G1, G2]),
        np.concatenate([problem.h, np.zeros(2 * me + mi)]), check_psd=False,
    )
    x, y, z, status, _, _, _ = _Ipm(aux, tol, max_iter, reg).run()
    if status == "failed":
        return None
    zi = np.maximum(z[:mi], 0.0)
    ray = (problem.A_eq.T @ y if me else np.zeros(d)) + (problem.G.T @ zi if mi else 0.0)
    violation = -float(problem.b_eq @ y + problem.h @ zi)
    return FarkasCertificate(y.copy(), zi, violation, _inf_norm(ray))


def solve_qp(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: np.ndarray | None = None,
    reg: float = DEFAULT_REG,
) -> QpSolution:
    """Solve a convex QP to KKT tolerance ``tol``.

    Parameters
    ----------
    problem : QpProblem
        The program to solve. It must be bounded below on its feasible set.
    tol : float
        Absolute bound on all three KKT residuals of an ``OPTIMAL`` answer.
    max_iter : int
        Interior-point iteration cap.
    x0 : array, optional
        Starting primal point; slacks and multipliers are derived from it.
    reg : float
        Static regularization of the primal and dual blocks of the KKT matrix.

    Returns
    -------
    QpSolution
        ``OPTIMAL`` with certified residuals, ``INFEASIBLE`` with a
        :class:`FarkasCertificate`, or ``NUMERICAL_FAILURE`` with a message.
    """
    x, y, z, how, iters, polished, reason = _Ipm(problem, tol, max_iter, reg).run(x0)
    if how != "failed":
        res = _residuals(problem, x, y, z)
        if res.max() <= tol:
            z = np.maximum(z, 0.0)
            obj = problem.objective(x)
            dual = float(-x @ problem.H @ x - problem.b_eq @ y - problem.h @ z)
            return QpSolution(
                x, obj, y, z, res, QpStatus.OPTIMAL, iters, dual, polished, reg
            )
        reason = f"residuals {res.max():.2e} above tolerance"

    # certifying infeasibility needs no more accuracy than the default
    cert = _phase_one(problem, max(tol, DEFAULT_TOL), max_iter, reg)
    res = _residuals(problem, x, y, np.maximum(z, 0.0))
    nan = float("nan")
    if cert is not None and cert.violation >= 10 * max(tol, DEFAULT_TOL) and cert.ray_residual <= 1e-6:
        return QpSolution(
            x, nan, y, z, res, QpStatus.INFEASIBLE, iters, nan, False, reg, cert,
            f"infeasible: certified violation {cert.violation:.3e}",
        )
    return QpSolution(
        x, nan, y, z, res, QpStatus.NUMERICAL_FAILURE, iters, nan, False, reg, cert,
        f"{reason}; best residuals {res}",
    )


def solve_qp_tight(problem: QpProblem, tol: float, fallback: float = DEFAULT_TOL) -> QpSolution:
    """Solve to ``tol``, retrying at ``fallback`` if the tight solve breaks down.

    Degenerate problems (no strict interior, non-unique multipliers) can stall
    well below the default tolerance while being easy at it.
    """
    sol = solve_qp(problem, tol=tol)
    if sol.status is QpStatus.NUMERICAL_FAILURE and fallback > tol:
        sol = solve_qp(problem, tol=fallback)
    return sol
