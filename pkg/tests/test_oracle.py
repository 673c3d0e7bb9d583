from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from buyin.errors import InfeasibleInstanceError, InvalidInputError
from buyin.model import PortfolioInstance, feasible_return_range
from buyin.oracle import brute_force, fixed_support_qp, random_instance


@pytest.fixture
def forced():
    Q = np.array([[0.04, 0.01], [0.01, 0.09]])
    return PortfolioInstance([0.05, 0.10], Q, 0.10, a=[0.6, 0.6], b=[1, 1])


def test_single_asset_support(forced):
    sol = fixed_support_qp(forced, [1])
    np.testing.assert_allclose(sol.y, [0, 1], atol=1e-12)
    assert sol.value == pytest.approx(0.09, abs=1e-12)


def test_infeasible_supports():
    inst = PortfolioInstance([0.1, 0.2, 0.3], np.eye(3), 0.2)
    assert fixed_support_qp(inst, []) is None
    assert fixed_support_qp(PortfolioInstance([0.1, 0.2, 0.3], np.eye(3), 0.2, a=0.4), [0, 1, 2]) is None
    lo = PortfolioInstance([0.1, 0.2, 0.3], np.eye(3), 0.2, a=0.1, b=0.3)
    assert fixed_support_qp(lo, [0, 1]) is None


def test_support_out_of_range(forced):
    with pytest.raises(InvalidInputError):
        fixed_support_qp(forced, [2])


def test_forced_instance(forced):
    res = brute_force(forced)
    np.testing.assert_allclose(res.y, [0, 1], atol=1e-12)
    np.testing.assert_array_equal(res.z, [0, 1])
    assert res.value == pytest.approx(0.09, abs=1e-12)
    assert res.supports_solved == 3


def test_unreachable_target():
    inst = PortfolioInstance([0.01, 0.02], np.eye(2), 0.05)
    with pytest.raises(InfeasibleInstanceError):
        brute_force(inst)


def test_caps_force_full_support():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(3, 2))
    inst = PortfolioInstance([0.01, 0.02, 0.03], F @ F.T + 1e-6 * np.eye(3), 0.02, a=0.3, b=0.4)
    res = brute_force(inst)
    np.testing.assert_array_equal(res.z, [1, 1, 1])
    assert res.value == pytest.approx(fixed_support_qp(inst, [0, 1, 2]).value, abs=1e-15)


def test_ties_go_to_smallest_z():
    # three identical singletons: every feasible support has value 1
    inst = PortfolioInstance([0.01, 0.01, 0.01], np.eye(3), 0.01, a=0.6)
    res = brute_force(inst)
    np.testing.assert_array_equal(res.z, [0, 0, 1])


def test_enumeration_limit():
    with pytest.raises(InvalidInputError):
        brute_force(random_instance(6, 0), support_limit=5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_permutation_equivariance(seed, rnd):
    inst = random_instance(3 + seed % 5, seed)
    perm = list(range(inst.n))
    rnd.shuffle(perm)
    a, b = brute_force(inst), brute_force(inst.permuted(perm))
    assert abs(a.value - b.value) <= 1e-12 * max(1.0, a.value) + 1e-15 or abs(a.value - b.value) <= 1e-10
    # unique optima map over; ties may resolve differently
    if not np.array_equal(a.z[perm], b.z):
        alt = fixed_support_qp(inst, np.flatnonzero(b.z[np.argsort(perm)]))
        assert alt is not None and abs(alt.value - a.value) <= 1e-10
    else:
        np.testing.assert_allclose(b.y, a.y[perm], atol=1e-7)


def test_fixings_restrict_enumeration():
    inst = random_instance(5, 12)
    full = brute_force(inst)
    sub = brute_force(inst, fixed_zero={int(np.argmax(full.z))})
    assert sub.value >= full.value - 1e-12
    assert sub.z[int(np.argmax(full.z))] == 0


@pytest.mark.parametrize("seed", range(5))
def test_generator(seed):
    inst = random_instance(6, seed)
    again = random_instance(6, seed)
    np.testing.assert_array_equal(inst.Q, again.Q)
    assert inst.R == again.R
    assert inst.meta["seed"] == seed
    assert np.all((inst.r >= -0.005) & (inst.r <= 0.01))
    lo, hi = feasible_return_range(inst)
    assert lo < inst.R < hi
    assert np.linalg.eigvalsh(inst.Q)[0] >= 1e-6 - 1e-12
    np.testing.assert_array_equal(inst.a, 0.05)
    brute_force(inst)
