"""Reference planning strategies: tier-priority heuristics and an exact search.

The tier heuristics fill storage everywhere and pour tasks into one tier at a
time (or round-robin across tiers), which is cheap but ignores the coupling
between placement and assignment. The exact planner enumerates the storage
grid and solves each assignment to optimality with a pruned search; it exists
as the optimum oracle for small instances and refuses anything larger than
its candidate limit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .assignment import TaskSet, cost_tables, expand_tasks, virtual_server_count
from .cost import AppProfile, ReservationDecision, Weights, total_usage
from .reservation import PlanResult
from .storage import build_placement
from .topology import Tier, Topology


class Strategy(str, Enum):
    BS_FIRST = "bs-first"
    NAP_FIRST = "nap-first"
    EQUAL = "equal"
    BRUTE_FORCE = "brute-force"
    SWARM = "swarm"
    ALWAYS = "always"
    NEVER = "never"
    MYOPIC = "myopic"
    SIM_DQN = "sim-dqn"
    RAW_DQN = "raw-dqn"


class InstanceTooLarge(Exception):
    """Raised when the exact planner refuses an instance; carries the estimate."""

    def __init__(self, estimate: float):
        self.estimate = estimate
        super().__init__(f"instance too large for exact search: ~{estimate:.3g} candidates")


TIER_ORDER = {
    Strategy.BS_FIRST: (Tier.BS, Tier.NAP, Tier.CN),
    Strategy.NAP_FIRST: (Tier.NAP, Tier.BS, Tier.CN),
}


def _full_storage(topology: Topology, app: AppProfile) -> np.ndarray:
    g = np.zeros(topology.edge_count)
    for e in range(topology.edge_count):
        chunks = min(int(topology.servers[e].storage_cap // app.chunk_bits), app.chunk_count)
        g[e] = chunks * app.chunk_bits
    return g


def _assemble(
    tasks: TaskSet,
    choice_col: np.ndarray,
    srv: np.ndarray,
    groups: int,
    topology: Topology,
    app: AppProfile,
) -> tuple[dict, np.ndarray]:
    f: dict[tuple[int, int, int, int], int] = {}
    m = np.zeros((groups, len(topology.servers)))
    for t in range(tasks.count):
        e = int(srv[t, choice_col[t]])
        key = (int(tasks.bs[t]), e, int(tasks.group[t]), int(tasks.chunk[t]))
        f[key] = f.get(key, 0) + 1
        m[int(tasks.group[t]), e] += 1
    c = (app.task_cycles / app.tau_p) * m.T
    return f, c


def tier_first_plan(
    strategy: Strategy,
    x: np.ndarray,
    p: np.ndarray,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> PlanResult:
    """Greedy plan that honors a fixed tier priority (or round-robin for
    ``equal``). Storage fills to capacity everywhere; tasks go to the highest
    priority tier that still has slots and remote budget, falling back tier
    by tier and ultimately to the core."""
    g = _full_storage(topology, app)
    placement = build_placement(g, x, p, topology, app)
    tasks = expand_tasks(x, p)
    T = tasks.count
    D, fw, srv = cost_tables(tasks, placement, topology, app, weights)
    cap = np.array(
        [virtual_server_count(e, topology, app, T) for e in range(len(topology.servers))],
        dtype=np.int64,
    )
    used = np.zeros(len(topology.servers), dtype=np.int64)
    budget_left = np.array([weights.budget_for(n) for n in range(x.shape[0])])
    choice = np.full(T, 2, dtype=np.int64)  # core fallback

    def try_assign(t: int, col: int) -> bool:
        e = int(srv[t, col])
        n = int(tasks.group[t])
        if used[e] >= cap[e]:
            return False
        if fw[t, col] > budget_left[n] + 1e-12:
            return False
        used[e] += 1
        budget_left[n] -= fw[t, col]
        choice[t] = col
        return True

    if strategy in TIER_ORDER:
        pending = list(range(T))
        for tier in TIER_ORDER[strategy]:
            col = int(tier)
            order = sorted(pending, key=lambda t: (D[t, col], t))
            pending = [t for t in order if not try_assign(t, col)]
    elif strategy is Strategy.EQUAL:
        for t in range(T):
            start = t % 3
            for step in range(3):
                if try_assign(t, (start + step) % 3):
                    break
    else:
        raise ValueError(f"{strategy} is not a tier heuristic")

    f, c = _assemble(tasks, choice, srv, x.shape[0], topology, app)
    decision = ReservationDecision(c=c, g=g, f=f)
    usage = total_usage(decision, placement, topology, app, weights, groups=x.shape[0])
    return PlanResult(
        decision=decision, placement=placement, usage=usage, objective=usage.delta_per_task
    )


@dataclass
class ExactLimits:
    max_candidates: float = 1e7


def _compositions(total: int):
    """All (k0, k1, k2) with k0 + k1 + k2 == total, k2 chosen implicitly."""
    for k0 in range(total + 1):
        for k1 in range(total - k0 + 1):
            yield k0, k1, total - k0 - k1


def brute_force_plan(
    x: np.ndarray,
    p: np.ndarray,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
    limits: ExactLimits | None = None,
) -> PlanResult:
    """Exact minimizer over the storage grid and all task assignments.

    Tasks identical in (BS, group, chunk) are interchangeable, so assignments
    enumerate per-type server-count splits rather than permutations; branches
    whose optimistic remainder cannot beat the incumbent are cut. Work is
    metered in explored candidates ((storage point, assignment node) pairs);
    exceeding the limit raises ``InstanceTooLarge`` with no partial answer.
    """
    limits = limits or ExactLimits()
    N = x.shape[0]
    E = len(topology.servers)
    L = app.chunk_bits

    grid_sizes = [
        min(int(topology.servers[e].storage_cap // L), app.chunk_count) + 1
        for e in range(topology.edge_count)
    ]
    grid_points = math.prod(grid_sizes)
    if grid_points > limits.max_candidates:
        raise InstanceTooLarge(float(grid_points))

    tasks = expand_tasks(x, p)
    T = tasks.count
    cap = np.array([virtual_server_count(e, topology, app, T) for e in range(E)], dtype=np.int64)

    best_delta = np.inf
    best: tuple | None = None
    explored = 0

    def grid_iter():
        # ascending total storage, so cheap storage points set the incumbent early
        points = itertools.product(*(range(s) for s in grid_sizes))
        if grid_points <= 200_000:
            points = sorted(points, key=lambda q: (sum(q), q))
        for idx in points:
            yield np.array(idx, dtype=float) * L

    for g in grid_iter():
        explored += 1
        if explored > limits.max_candidates:
            raise InstanceTooLarge(float(explored))
        placement = build_placement(g, x, p, topology, app)
        storage_term = float(
            weights.storage_w
            * sum(topology.servers[e].storage_unit_cost * g[e] for e in range(topology.edge_count))
        )
        if weights.cn_storage_in_objective:
            storage_term += float(
                weights.storage_w
                * topology.servers[topology.cn].storage_unit_cost
                * app.chunk_count
                * app.chunk_bits
            )
        if storage_term >= best_delta:
            continue
        if T == 0:
            if storage_term < best_delta:
                best_delta = storage_term
                best = (g.copy(), {}, np.zeros((E, N)))
            continue

        D, fw, srv = cost_tables(tasks, placement, topology, app, weights)

        # aggregate interchangeable tasks
        types: dict[tuple[int, int, int], list[int]] = {}
        for t in range(T):
            types.setdefault((int(tasks.bs[t]), int(tasks.group[t]), int(tasks.chunk[t])), []).append(t)
        type_list = sorted(types.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        mins = [min(D[ts[0]]) for _, ts in type_list]
        suffix_bound = np.zeros(len(type_list) + 1)
        for j in range(len(type_list) - 1, -1, -1):
            suffix_bound[j] = suffix_bound[j + 1] + mins[j] * len(type_list[j][1])

        cap_left = cap.copy()
        budget_left = np.array([weights.budget_for(n) for n in range(N)])
        splits = [None] * len(type_list)
        best_assign = best_delta - storage_term  # must beat the incumbent overall
        best_splits: list | None = None

        def descend(j: int, partial: float):
            nonlocal explored, best_assign, best_splits
            explored += 1
            if explored > limits.max_candidates:
                raise InstanceTooLarge(float(explored))
            if partial + suffix_bound[j] >= best_assign - 1e-12:
                return
            if j == len(type_list):
                best_assign = partial
                best_splits = [s for s in splits]
                return
            (b, n, _i), ts = type_list[j]
            t0 = ts[0]
            count = len(ts)
            for split in _compositions(count):
                ok = True
                add = 0.0
                fetch = 0.0
                for col in range(3):
                    k = split[col]
                    if k == 0:
                        continue
                    if k > cap_left[srv[t0, col]]:
                        ok = False
                        break
                    add += k * D[t0, col]
                    fetch += k * fw[t0, col]
                if not ok or fetch > budget_left[n] + 1e-12:
                    continue
                for col in range(3):
                    cap_left[srv[t0, col]] -= split[col]
                budget_left[n] -= fetch
                splits[j] = split
                descend(j + 1, partial + add)
                for col in range(3):
                    cap_left[srv[t0, col]] += split[col]
                budget_left[n] += fetch

        descend(0, 0.0)
        if best_splits is None:
            continue  # nothing under this storage point beats the incumbent
        choice = np.zeros(T, dtype=np.int64)
        for (_key, ts), split in zip(type_list, best_splits):
            pos = 0
            for col in range(3):
                for _ in range(split[col]):
                    choice[ts[pos]] = col
                    pos += 1
        f, c = _assemble(tasks, choice, srv, N, topology, app)
        best_delta = storage_term + best_assign
        best = (g.copy(), f, c)

    if best is None:
        raise RuntimeError("exact search found no feasible plan")
    g_best, f_best, c_best = best
    placement = build_placement(g_best, x, p, topology, app)
    decision = ReservationDecision(c=c_best, g=g_best, f=f_best)
    usage = total_usage(decision, placement, topology, app, weights, groups=N)
    return PlanResult(
        decision=decision, placement=placement, usage=usage, objective=usage.delta_per_task
    )


def myopic_reconfigure(delta_fresh: float, delta_stale: float, lam: float, reconfig_cost: float) -> int:
    """One-step rule: replan only when staying stale costs more than replanning."""
    return 0 if delta_stale - delta_fresh > lam * reconfig_cost else 1
