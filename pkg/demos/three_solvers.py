"""
DCA, branch-and-bound and enumeration on one instance
=====================================================

The fast local method (DCA on the exact penalty) is compared with the
exact branch-and-bound and with brute-force enumeration of supports.
"""
import numpy as np

from buyin.bnb import bnb_solve
from buyin.dca import DcaConfig, InitStrategy, solve_with_escalation
from buyin.model import classify
from buyin.oracle import brute_force, random_instance

inst = random_instance(9, 42)
print(f"n = {inst.n}, target return R = {inst.R:.5f}, floor a = {inst.a[0]}")

truth = brute_force(inst)
print(f"enumeration: value {truth.value:.8f}, support {np.flatnonzero(truth.z)}, "
      f"{truth.supports_solved} supports solved")

res = bnb_solve(inst)
print(f"branch-and-bound: value {res.best_value:.8f}, {res.status}, {res.nodes_explored} nodes")
print(res.node_log_csv().splitlines()[:4])

# DCA depends on its start point; all three start strategies are shown.
for strategy in InitStrategy:
    pt, rep = solve_with_escalation(inst, DcaConfig(init_strategy=strategy))
    gap = rep.value - truth.value
    print(f"DCA from {strategy.value:<10} value {rep.value:.8f}  gap {gap:.2e}  "
          f"iterations {rep.iterations}  final t {rep.config['t_final']}  {classify(pt, inst).value}")

# The trace records F, the penalty and step sizes per iteration.
_, rep = solve_with_escalation(inst)
print(rep.traces[-1].to_csv())
