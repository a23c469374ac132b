"""Both kernel implementations must agree bit-for-bit on random inputs."""

import numpy as np
import pytest

from tierplan import _kernels


def random_dp_instance(rng, n_items=None, cap=None):
    n_items = n_items or int(rng.integers(1, 12))
    cap = cap if cap is not None else int(rng.integers(0, 40))
    costs, steps, starts = [], [], [0]
    for _ in range(n_items):
        n_opts = int(rng.integers(1, 5))
        for k in range(n_opts):
            costs.append(float(rng.uniform(0, 10)))
            # guarantee feasibility: the last option of each item is free
            steps.append(0 if k == n_opts - 1 else int(rng.integers(0, 12)))
        starts.append(len(costs))
    return (
        np.array(costs),
        np.array(steps, dtype=np.int64),
        np.array(starts, dtype=np.int64),
        cap,
    )


def brute_force_dp(costs, steps, starts, cap):
    import itertools

    n_items = len(starts) - 1
    best = (np.inf, None)
    ranges = [range(starts[j], starts[j + 1]) for j in range(n_items)]
    for combo in itertools.product(*ranges):
        w = sum(steps[k] for k in combo)
        if w > cap:
            continue
        c = sum(costs[k] for k in combo)
        if c < best[0] - 1e-12:
            best = (c, combo)
    return best


def test_dp_paths_agree_bitwise():
    rng = np.random.default_rng(2)
    for _ in range(120):
        costs, steps, starts, cap = random_dp_instance(rng)
        a = _kernels.budget_dp_numpy(costs, steps, starts, cap)
        b = _kernels._budget_dp_loops(costs, steps, starts, cap)
        assert np.array_equal(a, b)


def test_dp_matches_exhaustive_minimum():
    rng = np.random.default_rng(3)
    for _ in range(60):
        costs, steps, starts, cap = random_dp_instance(rng, n_items=int(rng.integers(1, 6)), cap=int(rng.integers(0, 15)))
        chosen = _kernels.budget_dp(costs, steps, starts, cap)
        total = sum(costs[k] for k in chosen)
        weight = sum(steps[k] for k in chosen)
        best_cost, _ = brute_force_dp(costs, steps, starts, cap)
        assert weight <= cap
        assert total == pytest.approx(best_cost, abs=1e-9)


def test_dp_zero_budget_forces_free_options():
    costs = np.array([1.0, 5.0, 2.0, 9.0])
    steps = np.array([3, 0, 1, 0], dtype=np.int64)
    starts = np.array([0, 2, 4], dtype=np.int64)
    chosen = _kernels.budget_dp(costs, steps, starts, 0)
    assert list(chosen) == [1, 3]


def test_dp_tie_prefers_first_option():
    costs = np.array([4.0, 4.0])
    steps = np.array([0, 0], dtype=np.int64)
    starts = np.array([0, 2], dtype=np.int64)
    assert list(_kernels.budget_dp(costs, steps, starts, 5)) == [0]


def test_absorb_paths_agree_bitwise():
    rng = np.random.default_rng(4)
    for _ in range(200):
        loads = rng.integers(0, 15, size=int(rng.integers(1, 10))).astype(np.float64)
        cap = float(rng.integers(0, 40))
        a = _kernels.absorb_overflow_numpy(loads, cap)
        b = _kernels._absorb_overflow_loops(loads, cap)
        c = _kernels.absorb_overflow_jit(loads, cap)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_jit_and_numpy_dp_agree_on_larger_instances():
    rng = np.random.default_rng(5)
    costs, steps, starts, cap = random_dp_instance(rng, n_items=40, cap=500)
    a = _kernels.budget_dp_numpy(costs, steps, starts, cap)
    b = _kernels.budget_dp_jit(costs, steps, starts, cap)
    assert np.array_equal(a, b)
