"""
The convex QP engine
====================

Every solver in the package reduces to convex quadratic programs. This
script solves a few by hand-checkable examples and audits each answer with
an independent KKT check.
"""
import numpy as np

from buyin.qp import QpProblem, QpStatus, check_kkt, solve_qp

# Two weights summing to one, both nonnegative: the answer is (0.5, 0.5).
prob = QpProblem(np.eye(2), [0, 0], [[1, 1]], [1], -np.eye(2), [0, 0])
sol = solve_qp(prob)
print(sol.status.value, sol.x, "objective", sol.objective)
print("KKT residuals:", check_kkt(prob, sol))

# Euclidean projection onto the simplex. Sorting gives the exact answer to compare with.
# The objective is x'Hx + c'x (no half), so |x - v|^2 needs c = -2v.
v = np.array([0.9, 0.4, -0.3, 0.2])
proj = QpProblem(np.eye(4), -2 * v, np.ones((1, 4)), [1], -np.eye(4), np.zeros(4))
x = solve_qp(proj).x
u = np.sort(v)[::-1]
css = np.cumsum(u) - 1
k = np.max(np.flatnonzero(u - css / np.arange(1, 5) > 0)) + 1
print("projection        ", np.round(x, 10))
print("sorting reference ", np.maximum(v - css[k - 1] / k, 0))

# Contradictory constraints come back INFEASIBLE with a Farkas certificate.
bad = QpProblem(np.eye(1), [0.0], None, None, [[1.0], [-1.0]], [0.0, -1.0])
sol = solve_qp(bad)
assert sol.status is QpStatus.INFEASIBLE
print("infeasible; certificate multipliers", sol.certificate.ineq)
