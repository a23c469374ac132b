"""Hierarchical chunk placement driven by request ratios.

Each BS server stores the chunks most requested in its own cell. A NAP sees
only the demand its covered BS servers cannot absorb locally, summarized by
per-chunk *effective request ratios*; it stores the chunks ranking highest
there. The core server always holds the whole library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .topology import Tier, Topology


def round_half_up(v) -> np.ndarray:
    """Round ties away from zero toward +inf (0.5 -> 1), elementwise."""
    return np.floor(np.asarray(v, dtype=float) + 0.5)


@dataclass(frozen=True)
class Placement:
    """Chunk sets stored per server, plus the per-BS popularity rank order
    used to build them (needed by the local-absorption estimate)."""

    stored: tuple[frozenset[int], ...]
    bs_rank: tuple[tuple[int, ...], ...]

    def chunk_count(self, e: int) -> int:
        return len(self.stored[e])


def popularity_order(p_b: np.ndarray) -> list[int]:
    """Chunk indices sorted by descending request ratio, ties to the lower index."""
    return sorted(range(len(p_b)), key=lambda i: (-p_b[i], i))


def bs_placement(g_e: float, p_b: np.ndarray, chunk_bits: float) -> set[int]:
    """Top ``floor(g_e / chunk_bits)`` chunks of the BS's own ratio vector."""
    k = int(g_e // chunk_bits)
    return set(popularity_order(p_b)[:k])


def bs_task_cap(e: int, topology: Topology, task_cycles: float, tau_p: float) -> int:
    """Maximum task load a BS server can execute within the compute deadline."""
    cap = topology.servers[e].compute_cap
    if cap is None:
        raise ValueError("BS server capacity must be bounded")
    return int(tau_p * cap // task_cycles)


def chunk_loads(b: int, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Estimated integer task load per chunk in cell ``b`` (rounded half-up)."""
    total = x[:, b].sum()
    return round_half_up(p[b] * total)


def unserved_load(
    b: int,
    e: int,
    i: int,
    x: np.ndarray,
    p: np.ndarray,
    placement: Placement,
    max_load: int,
) -> int:
    """Load of chunk-``i`` tasks at BS ``b`` that its server cannot absorb.

    The server greedily serves chunks in popularity-rank order until its task
    capacity ``max_load`` runs out; the overflow of chunk ``i`` is zero while
    the cumulative load of the chunks ranked at or above it still fits, and
    otherwise the smaller of chunk ``i``'s own load and the amount by which
    the cumulative load exceeds capacity.
    """
    stored = placement.stored[e]
    if i not in stored:
        raise ValueError(f"chunk {i} is not stored at server {e}")
    loads = chunk_loads(b, x, p)
    ranked = [c for c in placement.bs_rank[b] if c in stored]
    j = ranked.index(i)
    cum = float(sum(loads[c] for c in ranked[: j + 1]))
    if cum <= max_load:
        return 0
    return int(min(loads[i], cum - max_load))


def nap_effective_ratios(
    nap: int,
    x: np.ndarray,
    p: np.ndarray,
    placement: Placement,
    topology: Topology,
    task_cycles: float,
    tau_p: float,
) -> np.ndarray:
    """Fraction of the NAP area's load per chunk left over by local absorption.

    Chunks a covered BS server does not store contribute their full estimated
    load: they can never be served locally. An empty area yields all zeros.
    The denominator is the integerized per-chunk load total, so the ratios
    always sum to at most 1 even when rounding inflates the raw task total.
    """
    I = p.shape[1]
    overflow = np.zeros(I)
    total = 0.0
    for b in topology.covered_bs(nap):
        e = b  # BS server position equals its BS index
        loads = chunk_loads(b, x, p)
        total += float(loads.sum())
        stored = placement.stored[e]
        ranked = [c for c in placement.bs_rank[b] if c in stored]
        cap = bs_task_cap(e, topology, task_cycles, tau_p)
        if ranked:
            unserved = _kernels.absorb_overflow(loads[np.array(ranked)], cap)
            for j, c in enumerate(ranked):
                overflow[c] += unserved[j]
        for c in range(I):
            if c not in stored:
                overflow[c] += loads[c]
    if total <= 0:
        return np.zeros(I)
    return overflow / total


def build_placement(
    g: np.ndarray,
    x: np.ndarray,
    p: np.ndarray,
    topology: Topology,
    app,
) -> Placement:
    """Placement for storage reservation ``g`` over the edge servers.

    BS servers rank chunks by their own request ratios, NAPs by effective
    request ratios computed after the BS placements, and the core stores
    everything. Reserving more than a server's capacity is an input error.
    """
    I = app.chunk_count
    stored: list[frozenset[int]] = []
    bs_rank = tuple(tuple(popularity_order(p[b])) for b in range(topology.bs_count))
    for e in range(topology.edge_count):
        cap = topology.servers[e].storage_cap
        if cap is not None and g[e] > cap + 1e-9:
            raise ValueError(f"storage reservation {g[e]} exceeds capacity at server {e}")
    for b in range(topology.bs_count):
        stored.append(frozenset(bs_placement(g[b], p[b], app.chunk_bits)))
    partial = Placement(stored=tuple(stored) + tuple(), bs_rank=bs_rank)
    for nap in topology.nap_positions:
        q = nap_effective_ratios(nap, x, p, partial, topology, app.task_cycles, app.tau_p)
        k = int(g[nap] // app.chunk_bits)
        order = sorted(range(I), key=lambda i: (-q[i], i))
        stored.append(frozenset(order[:k]))
    stored.append(frozenset(range(I)))
    return Placement(stored=tuple(stored), bs_rank=bs_rank)
