"""QPs whose solutions are known in closed form."""

from __future__ import annotations

import numpy as np

from buyin.qp import QpProblem


def project_simplex(p: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}`` by sorting."""
    u = np.sort(p)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, p.size + 1)
    rho = np.max(k[u - css / k > 0])
    theta = css[rho - 1] / rho
    return np.maximum(p - theta, 0.0)


def _simplex_case(p, total=1.0):
    n = p.size
    prob = QpProblem(np.eye(n), -2.0 * p, np.ones((1, n)), [total], -np.eye(n), np.zeros(n))
    return prob, project_simplex(p, total)


def _box_case(d, c, lo, hi):
    n = d.size
    prob = QpProblem(np.diag(d), c, None, None, np.vstack([np.eye(n), -np.eye(n)]),
                     np.concatenate([hi, -lo]))
    return prob, np.clip(-c / (2 * d), lo, hi)


def closed_form_suite() -> list[tuple[str, QpProblem, np.ndarray]]:
    cases = [
        ("x^2 with x >= 1", QpProblem([[1.0]], [0.0], None, None, [[-1.0]], [-1.0]), np.array([1.0])),
        ("symmetric pair", QpProblem(np.eye(2), [0, 0], [[1, 1]], [1], -np.eye(2), [0, 0]),
         np.array([0.5, 0.5])),
    ]
    rng = np.random.default_rng(20240601)
    for k in range(7):
        n = 2 + k
        total = 1.0 if k < 5 else 2.0
        prob, x = _simplex_case(rng.normal(size=n), total)
        cases.append((f"simplex projection n={n}", prob, x))
    for k in range(8):
        n = 1 + k
        d = rng.uniform(0.5, 3.0, n)
        c = rng.normal(size=n) * 3
        lo = -rng.uniform(0, 1, n)
        hi = rng.uniform(0, 1, n)
        prob, x = _box_case(d, c, lo, hi)
        cases.append((f"box quadratic n={n}", prob, x))

    A = rng.normal(size=(2, 5))
    b = rng.normal(size=2)
    cases.append(("least-norm equality", QpProblem(np.eye(5), np.zeros(5), A, b),
                  A.T @ np.linalg.solve(A @ A.T, b)))
    d = np.array([1.0, 2.0, 4.0])
    cases.append(("weighted budget", QpProblem(np.diag(d), np.zeros(3), [[1, 1, 1]], [1], -np.eye(3),
                                                np.zeros(3)), (1 / d) / np.sum(1 / d)))
    cases.append(("box LP vertex", QpProblem(np.zeros((3, 3)), [1.0, -2.0, 0.5], None, None,
                                              np.vstack([np.eye(3), -np.eye(3)]), [1, 2, 3, 1, 1, 1]),
                  np.array([-1.0, 2.0, -1.0])))
    assert len(cases) == 20
    return cases
