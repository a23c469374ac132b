"""Three-tier server topology: coverage relations, capacities, link costs.

Servers live at base stations (BS), network aggregation points (NAP), and the
core network (CN). Every BS is covered by exactly one server per tier: its
co-located BS server, the NAP responsible for its area, and the single CN
server. NAP areas partition the BS set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum


class Tier(IntEnum):
    BS = 0
    NAP = 1
    CN = 2


@dataclass(frozen=True)
class ServerRecord:
    """Static description of one server.

    A capacity of ``None`` means unbounded; only the core server may use it
    (its compute and storage are assumed sufficient for everything, so a
    magic large number is never needed). ``fetch_cost`` maps a remote server
    position to the per-bit cost of pulling a context chunk from it.
    ``link_cost`` maps a covered BS index to the per-bit transport cost
    between that BS and this server; a BS-tier server has cost 0 for its own
    BS because the two are co-located.
    """

    tier: Tier
    tier_index: int
    compute_cap: float | None
    storage_cap: float | None
    uplink_cap: float | None = None
    downlink_cap: float | None = None
    compute_unit_cost: float = 1.0
    storage_unit_cost: float = 0.0
    fetch_cost: dict[int, float] = field(default_factory=dict)
    link_cost: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Topology:
    """Immutable three-tier layout.

    Server handles are positions into ``servers``. Positions ``0..B-1`` hold
    the BS-tier servers (co-located with the BS of the same index), followed
    by the NAP servers, with the core server last. ``validate`` checks this
    convention together with every structural invariant; the rest of the
    package relies on it.
    """

    bs_count: int
    servers: tuple[ServerRecord, ...]
    nap_of_bs: tuple[int, ...]

    @property
    def cn(self) -> int:
        return len(self.servers) - 1

    @property
    def edge_count(self) -> int:
        """Number of servers that carry a storage reservation (BS + NAP)."""
        return len(self.servers) - 1

    @property
    def nap_positions(self) -> tuple[int, ...]:
        return tuple(range(self.bs_count, len(self.servers) - 1))

    def servers_covering(self, b: int) -> tuple[int, int, int]:
        """Servers whose coverage includes BS ``b``, in ascending tier order."""
        if not 0 <= b < self.bs_count:
            raise ValueError(f"BS index {b} out of range [0, {self.bs_count})")
        return (b, self.nap_of_bs[b], self.cn)

    def covered_bs(self, e: int) -> tuple[int, ...]:
        """BS indices inside the service area of server ``e``."""
        rec = self.servers[e]
        if rec.tier == Tier.BS:
            return (e,)
        if rec.tier == Tier.NAP:
            return tuple(b for b in range(self.bs_count) if self.nap_of_bs[b] == e)
        return tuple(range(self.bs_count))


def validate(topology: Topology) -> list[str]:
    """Return every invariant violation as a human-readable string.

    A valid topology yields an empty list. Violations are data, not
    exceptions: scenario linting wants all of them at once.
    """
    out: list[str] = []
    servers = topology.servers
    B = topology.bs_count

    cn_positions = [i for i, s in enumerate(servers) if s.tier == Tier.CN]
    if len(cn_positions) != 1:
        out.append(f"expected exactly one CN server, found {len(cn_positions)}")
    elif cn_positions[0] != len(servers) - 1:
        out.append("CN server must occupy the last position")

    for i, s in enumerate(servers[:B]):
        if s.tier != Tier.BS:
            out.append(f"position {i} must hold a BS-tier server, found {s.tier.name}")
        elif s.tier_index != i:
            out.append(f"BS server at position {i} has tier_index {s.tier_index}")

    for tier in (Tier.BS, Tier.NAP, Tier.CN):
        seen: set[int] = set()
        for i, s in enumerate(servers):
            if s.tier != tier:
                continue
            if s.tier_index in seen:
                out.append(f"duplicate {tier.name} tier_index {s.tier_index}")
            seen.add(s.tier_index)

    if len(topology.nap_of_bs) != B:
        out.append(f"nap_of_bs has length {len(topology.nap_of_bs)}, expected {B}")
    else:
        for b, e in enumerate(topology.nap_of_bs):
            if not (0 <= e < len(servers)) or servers[e].tier != Tier.NAP:
                out.append(f"BS {b} mapped to non-NAP server {e}")

    # NAP service areas are declared through their link-cost maps; they must
    # partition the BS set and agree with the nap_of_bs lookup.
    hits = {b: 0 for b in range(B)}
    for e, s in enumerate(servers):
        if s.tier != Tier.NAP:
            continue
        area = sorted(s.link_cost)
        if not area:
            out.append(f"NAP server {e} covers no BS")
        for b in area:
            if b not in hits:
                out.append(f"NAP server {e} lists unknown BS {b}")
                continue
            hits[b] += 1
            if len(topology.nap_of_bs) == B and topology.nap_of_bs[b] != e:
                out.append(f"BS {b} appears in NAP {e}'s area but is mapped elsewhere")
    for b, count in hits.items():
        if count > 1:
            out.append(f"BS {b} double-covered by {count} NAPs")
        elif count == 0:
            out.append(f"BS {b} covered by no NAP")

    for i, s in enumerate(servers):
        if s.tier != Tier.CN:
            if s.compute_cap is None or s.storage_cap is None:
                out.append(f"server {i}: only the CN may have unbounded capacity")
            elif s.compute_cap < 0 or s.storage_cap < 0:
                out.append(f"server {i}: negative capacity")
        for cap in (s.uplink_cap, s.downlink_cap):
            if cap is not None and cap < 0:
                out.append(f"server {i}: negative link capacity")
        if s.compute_unit_cost < 0 or s.storage_unit_cost < 0:
            out.append(f"server {i}: negative unit cost")
        if any(v < 0 for v in s.fetch_cost.values()):
            out.append(f"server {i}: negative fetch cost")
        if any(v < 0 for v in s.link_cost.values()):
            out.append(f"server {i}: negative link cost")
        if s.tier == Tier.BS and s.link_cost.get(s.tier_index, 0.0) != 0.0:
            out.append(f"BS server {i}: nonzero link cost to its own BS")
    return out


def _per_server(value, count: int, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * count
    vals = [float(v) for v in value]
    if len(vals) != count:
        raise ValueError(f"{name}: expected {count} values, got {len(vals)}")
    return vals


def build_topology(
    bs_count: int,
    nap_groups: list[list[int]],
    *,
    bs_compute: float | list[float],
    nap_compute: float | list[float],
    bs_storage: float | list[float],
    nap_storage: float | list[float],
    nap_uplink: float | None = None,
    nap_downlink: float | None = None,
    cn_uplink: float | None = None,
    cn_downlink: float | None = None,
    compute_unit_cost: tuple[float, float, float] = (1.0, 1.0, 1.0),
    storage_unit_cost: tuple[float, float, float] = (0.5, 0.8, 1.0),
    eta_nap: float = 5e-9,
    eta_cn: float = 9e-9,
    xi_bs_nap: float = 2.5e-9,
    xi_bs_cn: float = 6e-9,
    xi_nap_cn: float = 3.5e-9,
) -> Topology:
    """Assemble a topology from per-tier parameters.

    ``nap_groups`` lists, per NAP, the BS indices it covers; the groups must
    partition ``range(bs_count)``. Scalar capacities apply uniformly; pass a
    list for heterogeneous servers at the same tier.
    """
    nap_count = len(nap_groups)
    cn_pos = bs_count + nap_count
    bs_c = _per_server(bs_compute, bs_count, "bs_compute")
    bs_g = _per_server(bs_storage, bs_count, "bs_storage")
    nap_c = _per_server(nap_compute, nap_count, "nap_compute")
    nap_g = _per_server(nap_storage, nap_count, "nap_storage")

    nap_of_bs = [-1] * bs_count
    for j, group in enumerate(nap_groups):
        for b in group:
            nap_of_bs[b] = bs_count + j

    servers: list[ServerRecord] = []
    for b in range(bs_count):
        nap_pos = nap_of_bs[b]
        servers.append(
            ServerRecord(
                tier=Tier.BS,
                tier_index=b,
                compute_cap=bs_c[b],
                storage_cap=bs_g[b],
                compute_unit_cost=compute_unit_cost[0],
                storage_unit_cost=storage_unit_cost[0],
                fetch_cost={nap_pos: xi_bs_nap, cn_pos: xi_bs_cn},
                link_cost={b: 0.0},
            )
        )
    for j, group in enumerate(nap_groups):
        servers.append(
            ServerRecord(
                tier=Tier.NAP,
                tier_index=j,
                compute_cap=nap_c[j],
                storage_cap=nap_g[j],
                uplink_cap=nap_uplink,
                downlink_cap=nap_downlink,
                compute_unit_cost=compute_unit_cost[1],
                storage_unit_cost=storage_unit_cost[1],
                fetch_cost={cn_pos: xi_nap_cn},
                link_cost={b: eta_nap for b in group},
            )
        )
    servers.append(
        ServerRecord(
            tier=Tier.CN,
            tier_index=0,
            compute_cap=None,
            storage_cap=None,
            uplink_cap=cn_uplink,
            downlink_cap=cn_downlink,
            compute_unit_cost=compute_unit_cost[2],
            storage_unit_cost=storage_unit_cost[2],
            link_cost={b: eta_cn for b in range(bs_count)},
        )
    )
    return Topology(bs_count=bs_count, servers=tuple(servers), nap_of_bs=tuple(nap_of_bs))
