"""Portfolio selection under buy-in thresholds.

An instance asks for weights ``y`` minimizing the variance ``y'Qy`` subject to
``r'y = R``, ``sum(y) = 1`` and ``y_i in {0} U [a_i, b_i]``. With selection
indicators ``z`` the constraints become the mixed zero-one system

    r'y = R,  sum(y) = 1,  a_i z_i <= y_i <= b_i z_i,  z_i in {0, 1},

whose continuous relaxation (``0 <= z_i <= 1``) is the polytope ``A``. The
concave penalty ``p(z) = sum z_i (1 - z_i)`` vanishes on ``A`` exactly at
binary ``z``, so ``F = y'Qy + t p(z)`` minimized over ``A`` recovers the
mixed-integer problem for ``t`` large enough.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InfeasibleInstanceError, InvalidInputError
from .ingest import AssetStatistics, check_psd, load_statistics

FEASIBILITY_TOL = 1e-6


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PortfolioInstance:
    """Problem data ``(r, Q, R, a, b)``; scalar ``a``/``b`` broadcast to all assets."""

    r: np.ndarray
    Q: np.ndarray
    R: float
    a: np.ndarray | float = 0.05
    b: np.ndarray | float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).ravel()
        n = r.size
        if n < 1:
            raise InvalidInputError("instance needs at least one asset")
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape != (n, n):
            raise InvalidInputError(f"Q has shape {Q.shape}, expected {(n, n)}")
        try:
            a = np.broadcast_to(np.asarray(self.a, dtype=float), (n,))
            b = np.broadcast_to(np.asarray(self.b, dtype=float), (n,))
        except ValueError:
            raise InvalidInputError(f"bounds a, b must be scalars or length-{n} vectors") from None
        R = float(self.R)
        if not all(np.all(np.isfinite(v)) for v in (r, Q, a, b, R)):
            raise InvalidInputError("instance data must be finite")
        if not np.all((0 < a) & (a <= b) & (b <= 1)):
            i = int(np.flatnonzero(~((0 < a) & (a <= b) & (b <= 1)))[0])
            raise InvalidInputError(f"need 0 < a_i <= b_i <= 1; asset {i} has a={a[i]}, b={b[i]}")
        if np.max(np.abs(Q - Q.T)) > 1e-12:
            raise InvalidInputError("Q is not symmetric")
        check_psd(Q)
        object.__setattr__(self, "r", _readonly(r))
        object.__setattr__(self, "Q", _readonly(Q))
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "b", _readonly(b))

    @property
    def n(self) -> int:
        return self.r.size

    @classmethod
    def from_statistics(cls, stats: AssetStatistics, R: float, a=0.05, b=1.0) -> "PortfolioInstance":
        return cls(stats.mean_returns, stats.covariance, R, a, b)

    def with_return(self, R: float) -> "PortfolioInstance":
        return PortfolioInstance(self.r, self.Q, R, self.a, self.b, dict(self.meta))

    def permuted(self, perm) -> "PortfolioInstance":
        perm = np.asarray(perm)
        return PortfolioInstance(
            self.r[perm], self.Q[np.ix_(perm, perm)], self.R, self.a[perm], self.b[perm]
        )

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "r": self.r.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "PortfolioInstance":
        """Build from the instance JSON schema.

        ``Q`` (and optionally ``r``) may be replaced by ``"stats": path``
        naming a statistics file, resolved relative to ``base_dir``.
        """
        data = dict(data)
        if "stats" in data:
            path = Path(data["stats"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            stats = load_statistics(path)
            data.setdefault("r", stats.mean_returns.tolist())
            data.setdefault("Q", stats.covariance.tolist())
        missing = [k for k in ("r", "Q", "R") if k not in data]
        if missing:
            raise InvalidInputError(f"instance missing field(s) {', '.join(missing)}")
        inst = cls(data["r"], data["Q"], data["R"], data.get("a", 0.05), data.get("b", 1.0),
                   data.get("meta", {}))
        if "n" in data and int(data["n"]) != inst.n:
            raise InvalidInputError(f"declared n={data['n']} but data has {inst.n} assets")
        return inst


def load_instance(path: str | Path) -> PortfolioInstance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return PortfolioInstance.from_dict(data, base_dir=path.parent)


def save_instance(inst: PortfolioInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=1))


@dataclass(frozen=True)
class MixedPoint:
    """Weights ``y`` paired with selection indicators ``z``."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = _readonly(np.asarray(self.y, dtype=float).ravel())
        z = _readonly(np.asarray(self.z, dtype=float).ravel())
        if y.shape != z.shape:
            raise InvalidInputError(f"y and z lengths differ ({y.size} vs {z.size})")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.y, self.z])

    @classmethod
    def from_stacked(cls, x: np.ndarray) -> "MixedPoint":
        n = x.size // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True)
class PolytopeA:
    """Linear description of ``A`` over the stacked variable ``x = (y, z)``.

    Rows are kept in three groups: two equalities (return target, budget),
    ``2n`` coupling rows ``a_i z_i - y_i <= 0`` and ``y_i - b_i z_i <= 0``,
    and ``2n`` box rows ``-z_i <= 0`` and ``z_i <= 1``. Nonnegativity of
    ``y`` follows from the lower coupling rows.
    """

    A_eq: np.ndarray
    b_eq: np.ndarray
    G_couple: np.ndarray
    h_couple: np.ndarray
    G_box: np.ndarray
    h_box: np.ndarray

    @property
    def n(self) -> int:
        return self.A_eq.shape[1] // 2

    @property
    def G(self) -> np.ndarray:
        return np.vstack([self.G_couple, self.G_box])

    @property
    def h(self) -> np.ndarray:
        return np.concatenate([self.h_couple, self.h_box])

    def violation(self, pt: MixedPoint) -> float:
        """Largest violation over all rows (0 inside ``A``)."""
        x = pt.stacked()
        eq = np.max(np.abs(self.A_eq @ x - self.b_eq))
        ineq = np.max(self.G @ x - self.h)
        return float(max(eq, ineq, 0.0))

    def contains(self, pt: MixedPoint, tol: float = FEASIBILITY_TOL) -> bool:
        return self.violation(pt) <= tol


def build_polytope(inst: PortfolioInstance) -> PolytopeA:
    n = inst.n
    I, O = np.eye(n), np.zeros((n, n))
    A_eq = np.vstack([np.concatenate([inst.r, np.zeros(n)]),
                      np.concatenate([np.ones(n), np.zeros(n)])])
    b_eq = np.array([inst.R, 1.0])
    G_couple = np.vstack([np.hstack([-I, np.diag(inst.a)]),
                          np.hstack([I, -np.diag(inst.b)])])
    G_box = np.vstack([np.hstack([O, -I]), np.hstack([O, I])])
    h_box = np.concatenate([np.zeros(n), np.ones(n)])
    return PolytopeA(A_eq, b_eq, G_couple, np.zeros(2 * n), G_box, h_box)


def objective_V(y: np.ndarray, inst: PortfolioInstance) -> float:
    """Portfolio variance ``y'Qy``."""
    y = np.asarray(y, dtype=float)
    return float(y @ inst.Q @ y)


def penalty_p(z: np.ndarray, tol: float = 0.0) -> float:
    """Concave integrality penalty ``sum z_i (1 - z_i)`` on the unit box.

    Raises :class:`DomainError` for components outside ``[-tol, 1 + tol]``.
    """
    z = np.asarray(z, dtype=float)
    if not np.all((z >= -tol) & (z <= 1 + tol)):
        raise DomainError("penalty is only defined for z in [0, 1]^n")
    return float(np.sum(z * (1.0 - z)))


def penalized_F(pt: MixedPoint, inst: PortfolioInstance, t: float, tol: float = 0.0) -> float:
    """Penalized objective ``y'Qy + t p(z)``."""
    if t < 0:
        raise DomainError("penalty weight must be nonnegative")
    return objective_V(pt.y, inst) + t * penalty_p(pt.z, tol)


class Feasibility(enum.Enum):
    MIQP_FEASIBLE = "miqp_feasible"
    RELAXED_FEASIBLE = "relaxed_feasible"
    INFEASIBLE = "infeasible"


def classify(pt: MixedPoint, inst: PortfolioInstance, tol: float = FEASIBILITY_TOL,
             polytope: PolytopeA | None = None) -> Feasibility:
    polytope = polytope or build_polytope(inst)
    if not polytope.contains(pt, tol):
        return Feasibility.INFEASIBLE
    if np.max(np.minimum(np.abs(pt.z), np.abs(1.0 - pt.z))) <= tol:
        return Feasibility.MIQP_FEASIBLE
    return Feasibility.RELAXED_FEASIBLE


def is_binary(z: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
    z = np.asarray(z)
    return bool(np.max(np.minimum(np.abs(z), np.abs(1.0 - z)), initial=0.0) <= tol)


def threshold_feasible(y: np.ndarray, inst: PortfolioInstance, tol: float = FEASIBILITY_TOL) -> bool:
    """Check ``y`` against the original disjunctive form ``y_i in {0} U [a_i, b_i]``."""
    y = np.asarray(y)
    on = np.abs(y) > tol
    ok = np.all((y[on] >= inst.a[on] - tol) & (y[on] <= inst.b[on] + tol))
    return bool(
        ok
        and abs(inst.r @ y - inst.R) <= tol
        and abs(np.sum(y) - 1.0) <= tol
    )


def indicators_for(y: np.ndarray, inst: PortfolioInstance, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Binary ``z`` selecting assets with ``y_i >= a_i - tol``."""
    return (np.asarray(y) >= inst.a - tol).astype(float)


def return_range(r: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> tuple[float, float]:
    """Min and max of ``r'y`` over ``{lower <= y <= upper, sum(y) = 1}``.

    Solved exactly by the greedy rule for this fractional knapsack: start at
    ``lower`` and pour the remaining budget into the best (or worst) returns.
    Returns ``(inf, -inf)`` when the budget row cannot be met.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    slack = 1.0 - lower.sum()
    if slack < -1e-12 or upper.sum() < 1.0 - 1e-12:
        return np.inf, -np.inf
    cap = upper - lower

    def pour(order):
        y = lower.copy()
        left = max(slack, 0.0)
        for i in order:
            take = min(cap[i], left)
            y[i] += take
            left -= take
            if left <= 0:
                break
        return float(r @ y)

    order = np.argsort(r, kind="stable")
    return pour(order), pour(order[::-1])


def feasible_return_range(inst: PortfolioInstance) -> tuple[float, float]:
    """Range of targets ``R`` for which the relaxation over ``A`` is feasible.

    The projection of ``A`` onto ``y`` is ``{0 <= y <= b, sum(y) = 1}``.
    """
    return return_range(inst.r, np.zeros(inst.n), inst.b)


def require_reachable(inst: PortfolioInstance, tol: float = 1e-12) -> None:
    """Raise :class:`InfeasibleInstanceError` if ``R`` lies outside the reachable range."""
    lo, hi = feasible_return_range(inst)
    if not (lo - tol <= inst.R <= hi + tol):
        raise InfeasibleInstanceError(
            f"target return R={inst.R:.6g} outside achievable range [{lo:.6g}, {hi:.6g}]"
        )
