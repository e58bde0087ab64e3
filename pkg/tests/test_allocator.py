import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uavcollect.allocator import (BASELINE_KINDS, AllocationInstance, build_instance,
                                  hungarian_min_cost, solve_baseline, solve_bruteforce,
                                  solve_optimal)


def feasible(inst, res):
    rbs = res.rb_of_device[res.selected]
    assert len(set(rbs.tolist())) == len(rbs)  # one device per RB
    assert ((res.rb_of_device >= 0) == res.selected).all()  # one RB per device
    assert not (res.selected & ~inst.covered).any()
    assert res.total_weight == pytest.approx(res.collected(inst).sum(), rel=1e-12, abs=0)


def test_build_instance_cases():
    rates = np.full((3, 2), 2e6)
    inst = build_instance(rates, np.array([32e6, 4 * 8e6, 1e6]), np.array([True, True, False]), 40.0)
    # capacity 80e6 bits; clamped to the remaining data
    np.testing.assert_array_equal(inst.weights, [[32e6, 32e6], [32e6, 32e6], [0, 0]])
    zero = build_instance(rates, np.ones(3), np.ones(3, bool), 0.0)
    assert (zero.weights == 0).all()


def test_instance_validation():
    with pytest.raises(ValueError):
        AllocationInstance(np.array([[1.0]]), np.array([False]))
    with pytest.raises(ValueError):
        AllocationInstance(np.array([[-1.0]]), np.array([True]))


def test_two_by_two_example():
    res = solve_optimal(AllocationInstance.dense([[3, 1], [2, 4]]))
    assert res.rb_of_device.tolist() == [0, 1]
    assert res.total_weight == 7


def test_single_rb_column():
    res = solve_optimal(AllocationInstance.dense([[5], [2], [9]]))
    assert res.selected.tolist() == [False, False, True]
    assert res.total_weight == 9


def test_all_zero_selects_nothing():
    inst = AllocationInstance(np.zeros((3, 2)), np.ones(3, bool))
    res = solve_optimal(inst)
    assert res.total_weight == 0 and not res.selected.any()


def test_empty_instances():
    assert solve_optimal(AllocationInstance(np.zeros((0, 3)), np.zeros(0, bool))).total_weight == 0
    assert solve_bruteforce(AllocationInstance(np.zeros((2, 0)), np.ones(2, bool))).total_weight == 0
    assert solve_bruteforce(AllocationInstance.dense([[0.7]])).total_weight == 0.7


def test_bruteforce_size_guard():
    with pytest.raises(ValueError):
        solve_bruteforce(AllocationInstance.dense(np.ones((9, 2))))


def test_hungarian_matches_permutation_enumeration():
    rng = np.random.default_rng(0)
    for n in range(1, 6):
        c = rng.normal(size=(n, n))
        best = min(itertools.permutations(range(n)), key=lambda p: sum(c[i, p[i]] for i in range(n)))
        cols = hungarian_min_cost(c)
        assert sum(c[i, cols[i]] for i in range(n)) == pytest.approx(sum(c[i, best[i]] for i in range(n)))


def test_optimal_equals_bruteforce_random():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n, m = rng.integers(0, 7, 2)
        w = rng.uniform(0, 1, (n, m)) * (rng.uniform(size=(n, 1)) < 0.8)
        inst = AllocationInstance.dense(w)
        a, b = solve_optimal(inst), solve_bruteforce(inst)
        feasible(inst, a)
        feasible(inst, b)
        assert a.total_weight == b.total_weight


def test_ties_are_deterministic():
    inst = AllocationInstance.dense(np.ones((4, 3)))
    first = solve_optimal(inst)
    for _ in range(3):
        np.testing.assert_array_equal(solve_optimal(inst).rb_of_device, first.rb_of_device)
    assert first.total_weight == 3


weights_strategy = st.integers(1, 6).flatmap(lambda n: st.integers(1, 6).flatmap(
    lambda m: arrays(float, (n, m), elements=st.floats(0, 100, allow_nan=False))))


@given(weights_strategy, st.floats(0.01, 100))
@settings(max_examples=100, deadline=None)
def test_scale_equivariance(w, c):
    inst = AllocationInstance.dense(w)
    res = solve_optimal(inst)
    scaled = AllocationInstance.dense(w * c)
    best = solve_bruteforce(scaled).total_weight
    edges = float(sum((w * c)[n, res.rb_of_device[n]] for n in np.flatnonzero(res.selected)))
    assert edges == pytest.approx(best, rel=1e-9, abs=1e-12)


@given(weights_strategy, st.integers(0, 2 ** 32 - 1))
@settings(max_examples=100, deadline=None)
def test_baselines_feasible_and_dominated(w, seed):
    inst = AllocationInstance.dense(w)
    rng = np.random.default_rng(seed)
    aux = {"remaining": rng.uniform(size=len(w)), "gain": rng.uniform(size=len(w))}
    opt = solve_optimal(inst)
    feasible(inst, opt)
    for kind in BASELINE_KINDS:
        res = solve_baseline(inst, kind, aux, rng)
        feasible(inst, res)
        assert res.total_weight <= opt.total_weight + 1e-9


def test_random_baseline_single_device():
    inst = AllocationInstance.dense([[2.0]])
    res = solve_baseline(inst, "random", rng=np.random.default_rng(0))
    assert res.selected.tolist() == [True]


def test_data_aware_picks_largest_remaining():
    inst = AllocationInstance.dense(np.ones((3, 2)))
    res = solve_baseline(inst, "data_aware", {"remaining": np.array([9.0, 1.0, 5.0])})
    assert res.selected.tolist() == [True, False, True]


def test_gain_aware_picks_highest_gain():
    w = np.array([[1.0, 1.0], [3.0, 3.0], [2.0, 2.0]])
    res = solve_baseline(AllocationInstance.dense(w), "gain_aware", {"gain": np.array([3.0, 1.0, 2.0])})
    assert res.selected.tolist() == [True, False, True]
    assert res.total_weight == 3.0 < solve_optimal(AllocationInstance.dense(w)).total_weight


def test_unknown_baseline():
    with pytest.raises(ValueError):
        solve_baseline(AllocationInstance.dense([[1.0]]), "best_guess", {})
