"""Task-to-server assignment by proposal matching with budgeted selection.

Physical servers are expanded into unit-capacity slots so that assigning many
tasks to one server becomes a one-to-one matching. Servers with free slots
propose their cheapest remaining task each round; per group, a budgeted
multiple-choice selection picks which proposals to accept without exceeding
the group's remote-fetch allowance. The core server owns one slot per task,
so every task is eventually matched. Compute reservation follows in closed
form from the matched loads.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cost import AppProfile, Weights, fetch_usage, task_cost
from .storage import Placement
from .topology import Tier, Topology

# Budget grids wider than this are coarsened (weights rounded up, so the
# allowance is never exceeded); grids stay exact whenever the fetch costs
# share a common unit.
MAX_BUDGET_STEPS = 200_000


@dataclass(frozen=True)
class TaskSet:
    """Unit tasks expanded from a predicted load matrix and request profile."""

    bs: np.ndarray
    group: np.ndarray
    chunk: np.ndarray

    @property
    def count(self) -> int:
        return len(self.bs)


def apportion(ratios: np.ndarray, total: int) -> np.ndarray:
    """Integer counts ~ ratios * total, summing exactly to ``total``.

    Entries start at the half-up rounding of their share; the remaining
    difference is settled on the entries with the largest rounding shortfall
    (ties to the lower index), so the result is deterministic.
    """
    I = len(ratios)
    if total == 0:
        return np.zeros(I, dtype=np.int64)
    s = float(np.sum(ratios))
    raw = (np.asarray(ratios, dtype=float) / s) * total if s > 0 else np.full(I, total / I)
    base = np.floor(raw + 0.5).astype(np.int64)
    diff = total - int(base.sum())
    if diff != 0:
        short = raw - base
        order = sorted(range(I), key=lambda i: (-short[i], i))
        step = 1 if diff > 0 else -1
        k = 0
        if diff < 0:
            order = order[::-1]
        for _ in range(abs(diff)):
            while step < 0 and base[order[k]] == 0:
                k += 1
            base[order[k]] += step
            k = (k + 1) % I
    return base


def expand_tasks(x: np.ndarray, p: np.ndarray) -> TaskSet:
    """One task instance per predicted unit of load.

    Per BS, the chunk mix follows the request profile (apportioned to
    integers); chunk units are dealt to groups by largest remaining demand so
    every group's task count matches its row of ``x`` exactly.
    """
    bs: list[int] = []
    grp: list[int] = []
    chk: list[int] = []
    N, B = x.shape
    for b in range(B):
        total = int(x[:, b].sum())
        if total == 0:
            continue
        counts = apportion(p[b], total)
        remaining = x[:, b].astype(np.int64).copy()
        for i in range(len(counts)):
            for _ in range(int(counts[i])):
                n = int(np.argmax(remaining))
                remaining[n] -= 1
                bs.append(b)
                grp.append(n)
                chk.append(i)
    return TaskSet(
        bs=np.array(bs, dtype=np.int64),
        group=np.array(grp, dtype=np.int64),
        chunk=np.array(chk, dtype=np.int64),
    )


def virtual_server_count(e: int, topology: Topology, app: AppProfile, total_tasks: int) -> int:
    """Slot count for server ``e``: how many tasks it can take without
    breaking its compute deadline or, for a NAP, its up/downlink allowances.
    The core server gets one slot per task so matching always completes."""
    rec = topology.servers[e]
    if rec.tier == Tier.CN:
        return total_tasks
    bound = int(app.tau_p * rec.compute_cap // app.task_cycles)
    if rec.tier == Tier.BS:
        return bound
    per_task_up = sum(app.alpha * rec.link_cost[b] for b in topology.covered_bs(e))
    per_task_down = sum(app.gamma * rec.link_cost[b] for b in topology.covered_bs(e))
    if rec.uplink_cap is not None and per_task_up > 0:
        bound = min(bound, int(rec.uplink_cap // per_task_up))
    if rec.downlink_cap is not None and per_task_down > 0:
        bound = min(bound, int(rec.downlink_cap // per_task_down))
    return bound


def cost_tables(
    tasks: TaskSet,
    placement: Placement,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-task cost and raw fetch usage at each covering server.

    Returns ``(D, fw, srv)`` of shape (tasks, 3); column order is the
    ascending-tier coverage order (own BS server, its NAP, core). Vectorized
    mirror of ``task_cost``/``fetch_usage``; kept operation-for-operation
    identical so the two agree bit for bit.
    """
    T = tasks.count
    B = topology.bs_count
    I = app.chunk_count
    cn = topology.cn
    servers = topology.servers

    stored = np.zeros((len(servers), I), dtype=bool)
    for e in range(len(servers)):
        if placement.stored[e]:
            stored[e, list(placement.stored[e])] = True
    nap_of = np.array(topology.nap_of_bs, dtype=np.int64)
    unit = np.array([s.compute_unit_cost for s in servers])
    eta_nap = np.array([servers[nap_of[b]].link_cost[b] for b in range(B)])
    eta_cn = np.array([servers[cn].link_cost[b] for b in range(B)])
    xi_bs_nap = np.array([servers[b].fetch_cost[nap_of[b]] for b in range(B)])
    xi_bs_cn = np.array([servers[b].fetch_cost[cn] for b in range(B)])
    xi_nap_cn = np.array(
        [servers[e].fetch_cost[cn] if servers[e].tier == Tier.NAP else 0.0 for e in range(len(servers))]
    )

    b = tasks.bs
    i = tasks.chunk
    io = app.alpha + app.gamma
    at_bs = stored[b, i]
    at_nap = stored[nap_of[b], i]

    srv = np.stack([b, nap_of[b], np.full(T, cn, dtype=np.int64)], axis=1)
    fw = np.zeros((T, 3))
    fw[:, 0] = np.where(
        at_bs, 0.0, np.where(at_nap, app.remote_bits * xi_bs_nap[b], app.remote_bits * xi_bs_cn[b])
    )
    fw[:, 1] = np.where(at_nap, 0.0, app.remote_bits * xi_nap_cn[nap_of[b]])

    D = np.zeros((T, 3))
    D[:, 0] = weights.compute_w * unit[b] + weights.comm_w * fw[:, 0]
    D[:, 1] = (
        weights.compute_w * unit[nap_of[b]]
        + weights.comm_w * io * eta_nap[b]
        + weights.comm_w * fw[:, 1]
    )
    D[:, 2] = weights.compute_w * unit[cn] + weights.comm_w * io * eta_cn[b]
    return D, fw, srv


def build_preferences(
    tasks: TaskSet, D: np.ndarray, srv: np.ndarray, topology: Topology
) -> list[list[tuple]]:
    """Per-server preference lists over the tasks their coverage admits.

    Entries are (cost, bs, group, chunk, task, column) tuples sorted
    ascending, so equal costs break by origin BS, then group, chunk, and
    task id. Virtual servers of one physical server are interchangeable and
    share the list.
    """
    prefs: list[list[tuple]] = [[] for _ in range(len(topology.servers))]
    for t in range(tasks.count):
        for col in range(3):
            e = int(srv[t, col])
            prefs[e].append(
                (float(D[t, col]), int(tasks.bs[t]), int(tasks.group[t]), int(tasks.chunk[t]), t, col)
            )
    for entries in prefs:
        entries.sort()
    return prefs


def _budget_unit(fetch_weights: np.ndarray) -> tuple[float, bool]:
    """Common grid unit for fetch weights; exact when they are commensurate."""
    ws = sorted({float(w) for w in np.ravel(fetch_weights) if w > 0})
    if not ws:
        return 1.0, True
    for q in range(1, 1025):
        unit = ws[0] / q
        if all(abs(w / unit - round(w / unit)) <= 1e-9 * max(w / unit, 1.0) for w in ws):
            return unit, True
    return ws[0] / 1024, False


def _to_steps(weight: float, unit: float) -> int:
    r = weight / unit
    ri = round(r)
    if abs(r - ri) <= 1e-6 * max(r, 1.0):
        return int(ri)
    return int(math.ceil(r))


@dataclass
class Proposal:
    task: int
    server: int
    cost: float
    fetch: float


def select_proposals(
    proposals: list[Proposal],
    budget: float,
    budget_unit: float,
    current: dict[int, tuple[int, float, float]],
    defer_cost,
    committed: float | None = None,
) -> tuple[dict[int, int | None], bool]:
    """Pick which proposals to take for one group in one round.

    ``current`` maps already-matched task ids to (server, cost, fetch usage)
    and is read, never mutated; ``defer_cost(t)`` gives a task's guaranteed
    core-server cost, the price of leaving it unmatched; ``committed`` is the
    fetch usage of the current matches (derived from ``current`` if absent).
    Returns a map of state changes per task (the accepted server, or ``None``
    for an unmatch) and whether the budget grid was engaged. Ties prefer the
    status quo for matched tasks and acceptance for unmatched ones, so
    displacement happens only when it strictly lowers the summed cost.
    """
    if isinstance(defer_cost, dict):
        table = defer_cost
        defer_cost = table.__getitem__
    by_task: dict[int, list[Proposal]] = {}
    for pr in proposals:
        by_task.setdefault(pr.task, []).append(pr)

    new_fetch = sum(max(pr.fetch for pr in prs) for prs in by_task.values())
    if committed is None:
        committed = sum(w for (_, _, w) in current.values())
    unconstrained = math.isinf(budget) or committed + new_fetch <= budget + 1e-12

    # option tuples: (cost, fetch, server-or-None); order encodes the tie policy
    items: list[tuple[int, list[tuple[float, float, int | None]]]] = []
    for t, prs in sorted(by_task.items()):
        opts: list[tuple[float, float, int | None]] = []
        if t in current:
            e_cur, c_cur, w_cur = current[t]
            opts.append((c_cur, w_cur, e_cur))
        opts.extend((pr.cost, pr.fetch, pr.server) for pr in sorted(prs, key=lambda q: (q.cost, q.server)))
        opts.append((defer_cost(t), 0.0, None))
        items.append((t, opts))

    changes: dict[int, int | None] = {}
    if unconstrained:
        for t, opts in items:
            best = min(range(len(opts)), key=lambda k: opts[k][0])
            chosen = opts[best][2]
            if t in current and chosen == current[t][0]:
                continue
            if t not in current and chosen is None:
                continue
            changes[t] = chosen
        return changes, False

    # a binding budget may pay off reshuffling matches without fresh proposals
    for t, (e_cur, c_cur, w_cur) in sorted(current.items()):
        if t not in by_task:
            items.append((t, [(c_cur, w_cur, e_cur), (defer_cost(t), 0.0, None)]))

    unit = budget_unit
    cap = int(budget // unit)
    if cap > MAX_BUDGET_STEPS:
        unit = budget / MAX_BUDGET_STEPS
        cap = MAX_BUDGET_STEPS
    costs: list[float] = []
    steps: list[int] = []
    starts = [0]
    for _, opts in items:
        for c, w, _e in opts:
            costs.append(c)
            steps.append(min(_to_steps(w, unit), cap + 1))
        starts.append(len(costs))
    chosen_flat = _kernels.budget_dp(
        np.array(costs), np.array(steps, dtype=np.int64), np.array(starts, dtype=np.int64), cap
    )
    for idx, (t, opts) in enumerate(items):
        chosen = opts[int(chosen_flat[idx]) - starts[idx]][2]
        if t in current and chosen == current[t][0]:
            continue
        if t not in current and chosen is None:
            continue
        changes[t] = chosen
    return changes, True


@dataclass
class MatchInfo:
    iterations: int = 0
    dp_rounds: int = 0
    proposals: int = 0
    bulk_core: int = 0
    budget_grid_exact: bool = True
    extra: dict = field(default_factory=dict)


def assign_tasks(
    x: np.ndarray,
    p: np.ndarray,
    placement: Placement,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> tuple[dict, np.ndarray, MatchInfo]:
    """Match every predicted task to a server and reserve compute for it.

    Returns ``(f, c, info)``: the assignment map (bs, server, group, chunk)
    -> count, the per-(server, group) compute reservation in cycles/s sized
    so the matched load exactly meets the compute deadline, and matching
    statistics.
    """
    N, _B = x.shape
    E = len(topology.servers)
    tasks = expand_tasks(x, p)
    T = tasks.count
    info = MatchInfo()
    if T == 0:
        return {}, np.zeros((E, N)), info

    D, fw, srv = cost_tables(tasks, placement, topology, app, weights)
    cap = np.array([virtual_server_count(e, topology, app, T) for e in range(E)], dtype=np.int64)
    unit, exact = _budget_unit(fw)
    info.budget_grid_exact = exact

    prefs = build_preferences(tasks, D, srv, topology)
    ptr = [0] * E
    reoffer: list[tuple] = []  # unmatched tasks re-enter through the core's queue

    matched_col = np.full(T, -1, dtype=np.int64)
    matched_by_group: list[dict[int, tuple[int, float, float]]] = [{} for _ in range(N)]
    used = np.zeros(E, dtype=np.int64)
    budget_used = np.zeros(N)
    cn = topology.cn
    cn_consumed = np.zeros(T, dtype=bool)
    unmatched = T
    entries = 3 * T
    max_iters = 10 * entries + 64

    def match(t: int, col: int):
        nonlocal unmatched
        n = int(tasks.group[t])
        if matched_col[t] >= 0:
            old = int(srv[t, matched_col[t]])
            used[old] -= 1
            budget_used[n] -= fw[t, matched_col[t]]
        else:
            unmatched -= 1
        matched_col[t] = col
        used[int(srv[t, col])] += 1
        budget_used[n] += fw[t, col]
        matched_by_group[n][t] = (int(srv[t, col]), float(D[t, col]), float(fw[t, col]))

    def unmatch(t: int):
        nonlocal unmatched
        n = int(tasks.group[t])
        used[int(srv[t, matched_col[t]])] -= 1
        budget_used[n] -= fw[t, matched_col[t]]
        matched_col[t] = -1
        del matched_by_group[n][t]
        unmatched += 1
        if cn_consumed[t]:
            heapq.heappush(
                reoffer, (D[t, 2], int(tasks.bs[t]), int(tasks.group[t]), int(tasks.chunk[t]), t, 2)
            )
            cn_consumed[t] = False

    while unmatched > 0:
        info.iterations += 1
        if info.iterations > max_iters:
            raise RuntimeError("matching failed to settle within its iteration bound")

        # every non-core server drained or full: the rest belongs to the core
        if all(used[e] >= cap[e] or ptr[e] >= len(prefs[e]) for e in range(E - 1)):
            for t in range(T):
                if matched_col[t] < 0:
                    match(t, 2)
            info.bulk_core += 1
            break

        proposals_by_group: dict[int, list[Proposal]] = {}
        any_proposal = False
        for e in range(E):
            if used[e] >= cap[e]:
                continue
            if e == cn and reoffer and (ptr[e] >= len(prefs[e]) or reoffer[0] < prefs[e][ptr[e]]):
                d, _b, n, _i, t, col = heapq.heappop(reoffer)
            elif ptr[e] < len(prefs[e]):
                d, _b, n, _i, t, col = prefs[e][ptr[e]]
                ptr[e] += 1
            else:
                continue
            if e == cn:
                cn_consumed[t] = True
            if matched_col[t] == col:
                continue  # already matched here through an earlier duplicate
            proposals_by_group.setdefault(n, []).append(Proposal(task=t, server=e, cost=d, fetch=fw[t, col]))
            any_proposal = True
        info.proposals += sum(len(v) for v in proposals_by_group.values())
        if not any_proposal:
            continue

        defer_col = D[:, 2]
        for n, group_props in sorted(proposals_by_group.items()):
            changes, used_dp = select_proposals(
                group_props,
                weights.budget_for(n),
                unit,
                matched_by_group[n],
                lambda t: float(defer_col[t]),
                committed=float(budget_used[n]),
            )
            info.dp_rounds += used_dp
            for t, target in sorted(changes.items()):
                if target is None:
                    unmatch(t)
                else:
                    col = {Tier.BS: 0, Tier.NAP: 1, Tier.CN: 2}[topology.servers[target].tier]
                    match(t, col)

    f: dict[tuple[int, int, int, int], int] = {}
    m = np.zeros((N, E))
    for t in range(T):
        col = matched_col[t]
        key = (int(tasks.bs[t]), int(srv[t, col]), int(tasks.group[t]), int(tasks.chunk[t]))
        f[key] = f.get(key, 0) + 1
        m[int(tasks.group[t]), int(srv[t, col])] += 1
    c = (app.task_cycles / app.tau_p) * m.T
    return f, c, info
