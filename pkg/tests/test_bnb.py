from __future__ import annotations

import itertools
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from buyin.bnb import (
    BnbNode,
    bnb_report,
    bnb_solve,
    lift_indicators,
    node_relaxation,
    select_branch_variable,
)
from buyin.dca import solve_relaxation, solve_with_escalation
from buyin.errors import InfeasibleInstanceError, InvalidInputError
from buyin.model import Feasibility, PortfolioInstance, classify
from buyin.oracle import brute_force, fixed_support_qp, random_instance
from buyin.qp import QpStatus


@pytest.fixture
def forced():
    Q = np.array([[0.04, 0.01], [0.01, 0.09]])
    return PortfolioInstance([0.05, 0.10], Q, 0.10, a=[0.6, 0.6], b=[1, 1])


@pytest.mark.parametrize(
    "z, index",
    [([0.5, 0.9], 0), ([0.5, 0.5], 0), ([0.0, 1.0, 0.2], 2)],
)
def test_branch_variable(z, index):
    assert select_branch_variable(np.array(z)) == index


def test_branch_variable_requires_fractional():
    with pytest.raises(InvalidInputError):
        select_branch_variable(np.array([0.0, 1.0, 1e-8]))


def test_node_fixings_must_be_disjoint():
    with pytest.raises(InvalidInputError):
        BnbNode(fixed_zero={1}, fixed_one={1, 2})


def test_root_relaxation_is_the_plain_relaxation():
    inst = random_instance(6, 3)
    assert node_relaxation(inst, BnbNode()).objective == pytest.approx(
        solve_relaxation(inst).objective, abs=1e-12)


def test_fully_fixed_node_is_fixed_support_qp():
    inst = random_instance(4, 8)
    for bits in itertools.product((0, 1), repeat=inst.n):
        one = {i for i in range(inst.n) if bits[i]}
        if not one:
            continue
        sol = node_relaxation(inst, BnbNode(fixed_zero=set(range(inst.n)) - one, fixed_one=one))
        ref = fixed_support_qp(inst, one)
        if ref is None:
            assert sol.status is QpStatus.INFEASIBLE
        else:
            assert sol.objective == pytest.approx(ref.value, abs=1e-10)


def test_budget_violating_fixing_is_infeasible(forced):
    sol = node_relaxation(forced, BnbNode(fixed_one={0, 1}))
    assert sol.status is QpStatus.INFEASIBLE


def test_forced_instance(forced):
    res = bnb_solve(forced)
    assert res.status == "proved_optimal"
    assert res.best_value == pytest.approx(0.09, abs=1e-9)
    assert res.nodes_explored <= 3
    np.testing.assert_array_equal(res.best_point.z, [0, 1])


def test_lifted_indicators_are_integral_at_floor():
    inst = PortfolioInstance([0.1, 0.2, 0.3], np.eye(3), 0.2, a=0.1)
    z = lift_indicators(inst, np.array([0.0, 0.1, 0.9]))
    np.testing.assert_array_equal(z, [0, 1, 1])
    z = lift_indicators(inst, np.array([0.05, 0.0, 0.95]), fixed_one={1})
    np.testing.assert_allclose(z, [0.5, 1, 1])


def _fixings(log, node_id):
    """Rebuild a node's fixed sets by walking its ancestors' branch labels."""
    parents = {e.node_id: (e.parent, e.branch) for e in log}
    zero, one = set(), set()
    while node_id is not None:
        parent, branch = parents[node_id]
        m = re.fullmatch(r"z(\d+)=([01])", branch)
        if m:
            (zero if m.group(2) == "0" else one).add(int(m.group(1)) - 1)
        node_id = parent
    return zero, one


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_invariants(seed):
    inst = random_instance(3 + seed % 6, seed)
    res = bnb_solve(inst)
    oracle = brute_force(inst)
    assert res.status == "proved_optimal"
    assert abs(res.best_value - oracle.value) <= 1e-7
    assert classify(res.best_point, inst) is Feasibility.MIQP_FEASIBLE
    assert all(b <= a + 1e-12 for a, b in zip(res.incumbents, res.incumbents[1:]))

    # nodes pruned on their parent's bound carry that bound, which is still valid
    bounds = {e.node_id: e.lower_bound for e in res.log}
    for e in res.log:
        if not np.isfinite(e.lower_bound):
            continue
        zero, one = _fixings(res.log, e.node_id)
        try:
            sub = brute_force(inst, fixed_zero=zero, fixed_one=one).value
        except InfeasibleInstanceError:
            continue
        assert e.lower_bound <= sub + 1e-9
        if e.parent is not None:
            assert e.lower_bound >= bounds[e.parent] - 1e-9

    branched = {int(m.group(1)) for e in res.log if (m := re.fullmatch(r"z(\d+)=[01]", e.branch))}
    assert res.nodes_explored <= 2 ** (len(branched) + 1) - 1


def test_node_limit_status():
    inst = random_instance(10, 55)
    full = bnb_solve(inst)
    assert full.nodes_explored > 3
    res = bnb_solve(inst, node_limit=3)
    assert res.status == "node_limit"
    assert res.nodes_explored == 3
    assert res.best_value >= full.best_value - 1e-12


def test_seeded_incumbent_keeps_optimum():
    inst = random_instance(8, 17)
    pt, _ = solve_with_escalation(inst)
    a = bnb_solve(inst)
    b = bnb_solve(inst, incumbent=pt)
    assert b.best_value == pytest.approx(a.best_value, abs=1e-9)
    assert b.nodes_explored <= a.nodes_explored


def test_buyin_infeasible_instance():
    # the relaxation can mix both assets, but two 0.6 floors do not fit the budget
    inst = PortfolioInstance([0.05, 0.10], np.eye(2), 0.075, a=0.6)
    assert solve_relaxation(inst).status is QpStatus.OPTIMAL
    res = bnb_solve(inst)
    assert res.status == "infeasible"
    assert res.best_point is None
    with pytest.raises(InfeasibleInstanceError):
        brute_force(inst)


def test_node_log_and_report():
    inst = random_instance(7, 5)
    res = bnb_solve(inst)
    lines = res.node_log_csv().splitlines()
    assert lines[0] == "node,parent,branch,lower_bound,incumbent,outcome"
    assert len(lines) == len(res.log) + 1
    rep = bnb_report(inst, res, {"gap_tol": 1e-9})
    assert rep.solver == "bnb" and rep.iterations == res.nodes_explored
    assert rep.value == res.best_value
