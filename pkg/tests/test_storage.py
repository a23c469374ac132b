import itertools

import numpy as np
import pytest

from tierplan.storage import (
    Placement,
    bs_placement,
    bs_task_cap,
    build_placement,
    nap_effective_ratios,
    popularity_order,
    unserved_load,
)

import oracles
from conftest import default_app, tiny_topology

L = 1.2e9


def make_placement(stored_sets, p):
    ranks = tuple(tuple(popularity_order(p[b])) for b in range(p.shape[0]))
    return Placement(stored=tuple(frozenset(s) for s in stored_sets), bs_rank=ranks)


def test_bs_placement_empty_when_no_storage():
    assert bs_placement(0.0, np.array([0.5, 0.3, 0.2]), L) == set()


def test_bs_placement_top_two():
    assert bs_placement(2 * L, np.array([0.5, 0.3, 0.2]), L) == {0, 1}


def test_bs_placement_tie_goes_to_lower_index():
    assert bs_placement(L, np.array([0.4, 0.4, 0.2]), L) == {0}


def test_bs_placement_matches_exhaustive_argmax():
    rng = np.random.default_rng(3)
    for _ in range(25):
        I = int(rng.integers(2, 9))
        p = rng.dirichlet(np.ones(I))
        k = int(rng.integers(0, I + 1))
        got = bs_placement(k * L, p, L)
        best = max(
            itertools.combinations(range(I), k),
            key=lambda combo: (sum(p[list(combo)]), tuple(-i for i in combo)),
            default=(),
        )
        assert got == set(best)


def _absorption_instance(loads, cap, stored=None):
    """One BS, one group; request ratios shaped to produce given chunk loads."""
    total = sum(loads)
    I = len(loads)
    x = np.array([[total]])
    p = np.array([[ld / total for ld in loads]])
    stored = set(range(I)) if stored is None else stored
    placement = make_placement([stored], p)
    return x, p, placement


def test_unserved_zero_when_capacity_ample():
    x, p, placement = _absorption_instance([6, 5, 2], cap := 100)
    for i in range(3):
        assert unserved_load(0, 0, i, x, p, placement, cap) == 0


def test_unserved_two_case_hand_example():
    # ranked loads 6 then 5, capacity 8: first chunk fits, second spills 3
    x, p, placement = _absorption_instance([6, 5], 8)
    assert unserved_load(0, 0, 0, x, p, placement, 8) == 0
    assert unserved_load(0, 0, 1, x, p, placement, 8) == min(5, 11 - 8)


def test_unserved_saturates_at_zero_capacity():
    x, p, placement = _absorption_instance([6, 5, 2], 0)
    for i, load in enumerate([6, 5, 2]):
        assert unserved_load(0, 0, i, x, p, placement, 0) == load


def test_unserved_requires_chunk_stored():
    x, p, placement = _absorption_instance([6, 5], 8, stored={0})
    with pytest.raises(ValueError):
        unserved_load(0, 0, 1, x, p, placement, 8)


def test_unserved_matches_unit_simulation():
    rng = np.random.default_rng(11)
    for _ in range(200):
        I = int(rng.integers(1, 7))
        loads = [int(v) for v in rng.integers(0, 12, size=I)]
        if sum(loads) == 0:
            loads[0] = 1
        cap = int(rng.integers(0, sum(loads) + 3))
        x, p, placement = _absorption_instance(loads, cap)
        ranked = [c for c in placement.bs_rank[0]]
        ranked_loads = [unserved_load(0, 0, i, x, p, placement, cap) for i in ranked]
        # the ratio vector regenerates the loads only approximately; feed the
        # oracle the same integerized loads the implementation sees
        from tierplan.storage import chunk_loads

        integer_loads = chunk_loads(0, x, p)
        expect = oracles.greedy_absorption([integer_loads[i] for i in ranked], cap)
        assert ranked_loads == expect


def _nap_instance():
    app = default_app(chunk_count=3)
    topo = tiny_topology()
    return app, topo


def test_nap_ratios_zero_when_bs_absorbs_everything():
    app, topo = _nap_instance()
    x = np.array([[10, 10]])
    p = np.array([[0.6, 0.4, 0.0], [0.5, 0.5, 0.0]])
    placement = make_placement([{0, 1, 2}, {0, 1, 2}, set(), set()], p)
    q = nap_effective_ratios(2, x, p, placement, topo, app.task_cycles, app.tau_p)
    # BS capacity 112 tasks >> 10: nothing spills
    assert np.allclose(q, 0.0)


def test_nap_ratio_hand_example():
    app, topo = _nap_instance()
    # single loaded BS: 20 tasks, chunk 0 stored and absorbed, chunk 1 unstored (load 8)
    x = np.array([[20, 0]])
    p = np.array([[0.6, 0.4, 0.0], [0.0, 0.0, 0.0]])
    placement = make_placement([{0}, set(), set(), set()], p)
    q = nap_effective_ratios(2, x, p, placement, topo, app.task_cycles, app.tau_p)
    assert q[0] == 0.0
    assert q[1] == pytest.approx(8 / 20)
    assert q[2] == 0.0


def test_nap_ratio_zero_load_area():
    app, topo = _nap_instance()
    x = np.zeros((1, 2), dtype=int)
    p = np.zeros((2, 3))
    placement = make_placement([set(), set(), set(), set()], p)
    q = nap_effective_ratios(2, x, p, placement, topo, app.task_cycles, app.tau_p)
    assert np.array_equal(q, np.zeros(3))


def test_nap_ratio_sum_bounded_by_one():
    app, topo = _nap_instance()
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = rng.integers(0, 30, size=(2, 2))
        p = rng.dirichlet(np.ones(3), size=2)
        g = rng.integers(0, 3, size=2) * app.chunk_bits
        placement = build_placement(
            np.array([g[0], g[1], 0.0]), x, p, topo, app
        )
        q = nap_effective_ratios(2, x, p, placement, topo, app.task_cycles, app.tau_p)
        assert q.sum() <= 1.0 + 1e-9


def test_build_placement_zero_storage_leaves_core_only():
    app, topo = _nap_instance()
    x = np.array([[5, 5]])
    p = np.array([[0.6, 0.4, 0.0], [0.2, 0.3, 0.5]])
    placement = build_placement(np.zeros(3), x, p, topo, app)
    assert placement.stored[0] == frozenset()
    assert placement.stored[1] == frozenset()
    assert placement.stored[2] == frozenset()
    assert placement.stored[topo.cn] == frozenset(range(3))


def test_build_placement_full_nap_stores_everything():
    app, topo = _nap_instance()
    x = np.array([[5, 5]])
    p = np.array([[0.6, 0.4, 0.0], [0.2, 0.3, 0.5]])
    g = np.array([0.0, 0.0, 3 * app.chunk_bits])
    placement = build_placement(g, x, p, topo, app)
    assert placement.stored[2] == frozenset(range(3))


def test_build_placement_nap_picks_argmax_ratio():
    app, topo = _nap_instance()
    # bs capacity swallows everything it stores; unstored chunk 2 dominates spill
    x = np.array([[20, 20]])
    p = np.array([[0.1, 0.5, 0.4], [0.3, 0.2, 0.5]])
    g = np.array([app.chunk_bits, app.chunk_bits, app.chunk_bits])
    placement = build_placement(g, x, p, topo, app)
    stored_direct = oracles.placement_direct(g, x, p, topo, app)
    assert placement.stored[2] == frozenset(stored_direct[2])


def test_placement_capacity_guard():
    app, topo = _nap_instance()
    x = np.array([[1, 1]])
    p = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    g = np.zeros(3)
    g[0] = topo.servers[0].storage_cap + app.chunk_bits
    with pytest.raises(ValueError):
        build_placement(g, x, p, topo, app)


def test_top_k_sets_nested_as_storage_grows():
    app, topo = _nap_instance()
    rng = np.random.default_rng(9)
    p = rng.dirichlet(np.ones(3), size=2)
    prev = set()
    for k in range(4):
        got = bs_placement(k * app.chunk_bits, p[0], app.chunk_bits)
        assert prev <= got
        prev = got


def test_placement_matches_direct_construction_randomized():
    app, topo = _nap_instance()
    rng = np.random.default_rng(21)
    for _ in range(60):
        x = rng.integers(0, 40, size=(2, 2))
        p = rng.dirichlet(np.ones(3), size=2)
        counts = rng.integers(0, 4, size=3)
        g = np.minimum(
            counts * app.chunk_bits,
            [topo.servers[e].storage_cap for e in range(3)],
        )
        g = np.floor(g / app.chunk_bits) * app.chunk_bits
        placement = build_placement(g, x, p, topo, app)
        direct = oracles.placement_direct(g, x, p, topo, app)
        for e in range(4):
            assert placement.stored[e] == frozenset(direct[e]), f"server {e}"
