"""Resource-usage accounting: per-term usage, the weighted total, per-task costs.

All bit quantities are plain floats holding integral values (64-bit safe);
accumulation happens in double precision. The weighted total combines compute,
storage, and communication usage (uplink + downlink transport plus remote chunk
fetches), each scaled by its weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .storage import Placement
from .topology import Tier, Topology


@dataclass(frozen=True)
class AppProfile:
    """Per-task resource profile of the stateful application.

    ``alpha``: input bits per task, ``beta``: cycles per input bit,
    ``gamma``: result bits per task, ``chunk_bits``: size of one context
    chunk, ``remote_bits``: bits moved per remote chunk fetch (may differ
    from ``chunk_bits`` because of protocol overhead), ``chunk_count``:
    library size, ``tau``: interval length in seconds, ``tau_p``: maximum
    tolerable compute time per task.
    """

    alpha: float
    beta: float
    gamma: float
    chunk_bits: float
    remote_bits: float
    chunk_count: int
    tau: float = 300.0
    tau_p: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "chunk_bits", "remote_bits", "tau", "tau_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"AppProfile.{name} must be positive")
        if self.chunk_count < 1:
            raise ValueError("AppProfile.chunk_count must be >= 1")

    @property
    def task_cycles(self) -> float:
        """CPU cycles needed by one task."""
        return self.alpha * self.beta


@dataclass(frozen=True)
class Weights:
    """Objective weights and reconfiguration economics.

    ``remote_budget`` caps the per-group communication usage of remote chunk
    fetches in one interval; ``None`` means unconstrained. The core server
    always stores the whole library, so its storage cost is a constant;
    ``cn_storage_in_objective`` controls whether that constant is counted.
    """

    compute_w: float = 1.0
    storage_w: float = 0.5e-7
    comm_w: float = 1.0
    reconfig_weight: float = 12.0
    reconfig_cost: float = 5.0
    remote_budget: tuple[float, ...] | None = None
    cn_storage_in_objective: bool = False

    def budget_for(self, group: int) -> float:
        if self.remote_budget is None:
            return float("inf")
        return self.remote_budget[group]


@dataclass
class ReservationDecision:
    """One interval's reservation: compute ``c`` (servers x groups, cycles/s),
    storage ``g`` (bits per edge server), and assignment ``f`` mapping
    (bs, server, group, chunk) to a task count."""

    c: np.ndarray
    g: np.ndarray
    f: dict[tuple[int, int, int, int], int]

    def task_total(self) -> int:
        return int(sum(self.f.values()))


@dataclass
class UsageBreakdown:
    """Per-server usage terms and the weighted total for one interval."""

    compute: np.ndarray
    storage: np.ndarray
    uplink: np.ndarray
    downlink: np.ndarray
    remote: np.ndarray
    remote_by_group: np.ndarray
    loads: np.ndarray = field(repr=False, default=None)
    delta: float = 0.0
    delta_per_task: float = 0.0


def group_count(f: dict, minimum: int = 1) -> int:
    return max(minimum, 1 + max((n for (_, _, n, _) in f), default=-1))


def compute_usage(f: dict, topology: Topology, groups: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-server compute usage and per-(group, server) task loads.

    Returns ``(eps_c, m)`` where ``eps_c[e]`` is the compute usage of server
    ``e`` and ``m[n, e]`` the number of tasks from group ``n`` it executes.
    Entries of ``f`` naming a server that does not cover the task's BS are an
    input error.
    """
    E = len(topology.servers)
    m = np.zeros((groups or group_count(f), E))
    for (b, e, n, _i), count in f.items():
        if e not in topology.servers_covering(b):
            raise ValueError(f"assignment ({b}, {e}) violates coverage")
        m[n, e] += count
    eps_c = np.array([topology.servers[e].compute_unit_cost for e in range(E)]) * m.sum(axis=0)
    return eps_c, m


def storage_usage(g: np.ndarray, topology: Topology, app: AppProfile, weights: Weights) -> np.ndarray:
    """Per-server storage usage for reservation ``g`` over the edge servers.

    The core server stores the full library; its (constant) usage is counted
    only when ``weights.cn_storage_in_objective`` is set.
    """
    E = len(topology.servers)
    eps_s = np.zeros(E)
    for e in range(topology.edge_count):
        rec = topology.servers[e]
        if rec.storage_cap is not None and g[e] > rec.storage_cap + 1e-9:
            raise ValueError(f"storage reservation exceeds capacity at server {e}")
        eps_s[e] = rec.storage_unit_cost * g[e]
    if weights.cn_storage_in_objective:
        eps_s[topology.cn] = (
            topology.servers[topology.cn].storage_unit_cost * app.chunk_count * app.chunk_bits
        )
    return eps_s


def comm_usage(f: dict, topology: Topology, app: AppProfile) -> tuple[np.ndarray, np.ndarray]:
    """Per-(bs, server) uplink and downlink transport usage.

    BS-tier servers are co-located with their BS, so both terms are zero
    there; NAP and CN servers pay the per-bit link cost for input upload and
    result download.
    """
    B, E = topology.bs_count, len(topology.servers)
    up = np.zeros((B, E))
    down = np.zeros((B, E))
    for (b, e, _n, _i), count in f.items():
        rec = topology.servers[e]
        if rec.tier == Tier.BS:
            continue
        eta = rec.link_cost[b]
        up[b, e] += app.alpha * eta * count
        down[b, e] += app.gamma * eta * count
    return up, down


def remote_usage(
    f: dict, placement: Placement, topology: Topology, app: AppProfile, groups: int | None = None
) -> np.ndarray:
    """Per-(group, server) communication usage of remote chunk fetches.

    A BS server missing a chunk pulls it from its NAP when stored there,
    otherwise from the core; a NAP missing a chunk pulls from the core; the
    core never fetches.
    """
    E = len(topology.servers)
    v_re = np.zeros((groups or group_count(f), E))
    for (b, e, n, i), count in f.items():
        v_re[n, e] += fetch_usage(b, e, i, placement, topology, app) * count
    return v_re


def fetch_usage(b: int, e: int, i: int, placement: Placement, topology: Topology, app: AppProfile) -> float:
    """Remote-fetch communication usage of one task requesting chunk ``i`` at server ``e``."""
    rec = topology.servers[e]
    if rec.tier == Tier.CN or i in placement.stored[e]:
        return 0.0
    if rec.tier == Tier.NAP:
        return app.remote_bits * rec.fetch_cost[topology.cn]
    nap = topology.nap_of_bs[b]
    if i in placement.stored[nap]:
        return app.remote_bits * rec.fetch_cost[nap]
    return app.remote_bits * rec.fetch_cost[topology.cn]


def total_usage(
    decision: ReservationDecision,
    placement: Placement,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
    groups: int | None = None,
) -> UsageBreakdown:
    """Assemble every usage term and the weighted total.

    ``delta_per_task`` divides by the number of assigned tasks and is defined
    as 0 for an empty interval (idle intervals are legal).
    """
    groups = groups or group_count(decision.f)
    eps_c, m = compute_usage(decision.f, topology, groups=groups)
    eps_s = storage_usage(decision.g, topology, app, weights)
    up, down = comm_usage(decision.f, topology, app)
    v_re = remote_usage(decision.f, placement, topology, app, groups=groups)

    comm = up.sum(axis=0) + down.sum(axis=0) + v_re.sum(axis=0)
    delta = float(
        weights.compute_w * eps_c.sum()
        + weights.storage_w * eps_s.sum()
        + weights.comm_w * comm.sum()
    )
    total = decision.task_total()
    return UsageBreakdown(
        compute=eps_c,
        storage=eps_s,
        uplink=up.sum(axis=0),
        downlink=down.sum(axis=0),
        remote=v_re.sum(axis=0),
        remote_by_group=v_re,
        loads=m,
        delta=delta,
        delta_per_task=delta / total if total else 0.0,
    )


def verify_constraints(
    decision: ReservationDecision,
    x: np.ndarray,
    placement: Placement,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> list[str]:
    """Check a planned decision against every hard constraint.

    Verifies task conservation per (BS, group), compute and storage caps,
    the closed-form sizing of the compute reservation against the deadline,
    NAP/CN up- and downlink allowances, and per-group remote-fetch budgets.
    Returns one message per violation; a clean decision returns [].
    """
    out: list[str] = []
    N, B = x.shape
    E = len(topology.servers)

    assigned = np.zeros((N, B))
    for (b, e, n, _i), count in decision.f.items():
        assigned[n, b] += count
        if count < 0 or count != int(count):
            out.append(f"assignment count for ({b}, {e}) not a natural number")
    for n in range(N):
        for b in range(B):
            if assigned[n, b] != x[n, b]:
                out.append(
                    f"conservation broken at (bs={b}, group={n}): assigned {assigned[n, b]}, load {x[n, b]}"
                )

    _eps_c, m = compute_usage(decision.f, topology, groups=N)
    for e in range(E):
        cap = topology.servers[e].compute_cap
        if cap is not None and decision.c[e].sum() > cap + 1e-9:
            out.append(f"compute reservation exceeds capacity at server {e}")
        for n in range(N):
            if m[n, e] > 0:
                want = app.task_cycles * m[n, e] / app.tau_p
                if abs(decision.c[e, n] - want) > 1e-9 * max(1.0, want):
                    out.append(f"compute reservation at ({e}, {n}) misses the deadline closed form")
            elif decision.c[e, n] != 0.0:
                out.append(f"compute reserved at ({e}, {n}) with no load")

    for e in range(topology.edge_count):
        cap = topology.servers[e].storage_cap
        if cap is not None and decision.g[e] > cap + 1e-9:
            out.append(f"storage reservation exceeds capacity at server {e}")

    up, down = comm_usage(decision.f, topology, app)
    for e in range(E):
        rec = topology.servers[e]
        if rec.uplink_cap is not None and up[:, e].sum() > rec.uplink_cap + 1e-9:
            out.append(f"uplink allowance exceeded at server {e}")
        if rec.downlink_cap is not None and down[:, e].sum() > rec.downlink_cap + 1e-9:
            out.append(f"downlink allowance exceeded at server {e}")

    v_re = remote_usage(decision.f, placement, topology, app, groups=N)
    for n in range(N):
        budget = weights.budget_for(n)
        if v_re[n].sum() > budget + 1e-9:
            out.append(f"remote-fetch budget exceeded for group {n}")
    return out


def task_cost(
    b: int,
    e: int,
    n: int,
    i: int,
    placement: Placement,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> float:
    """Weighted cost of executing one task from (BS ``b``, group ``n``)
    requesting chunk ``i`` at server ``e``.

    The base term covers compute plus uplink/downlink transport; a remote
    fetch is added when the chunk is absent at the executing server,
    mirroring ``fetch_usage``. Storage cost is excluded: it depends on the
    reservation, not on the assignment.
    """
    rec = topology.servers[e]
    eta = rec.link_cost[b] if rec.tier != Tier.BS else 0.0
    base = weights.compute_w * rec.compute_unit_cost + weights.comm_w * (app.alpha + app.gamma) * eta
    return base + weights.comm_w * fetch_usage(b, e, i, placement, topology, app)
