"""Terminal mobility, grouping, and per-interval demand synthesis.

Each terminal carries a dwell-time vector over the base stations (its
mobility pattern for one interval). Terminals are clustered into groups by
pattern; each interval they emit tasks attributed to their longest-dwell BS,
every task requesting one context chunk drawn from a per-BS popularity
ranking. Prediction of the next interval's demand is either an exponential
moving average over history or an oracle passthrough used to isolate the
planners from prediction error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .storage import round_half_up


@dataclass
class UTProfile:
    ut_id: int
    dwell: np.ndarray
    current_bs: int
    group: int = 0


@dataclass(frozen=True)
class Snapshot:
    """Demand for one interval: task counts per (group, BS) and per-BS chunk
    request ratios (rows sum to 1 wherever the BS saw any tasks)."""

    x: np.ndarray
    p: np.ndarray

    @property
    def task_total(self) -> int:
        return int(self.x.sum())


@dataclass
class WorkloadParams:
    p_stay: float = 0.8
    rate_task: float = 2.0
    zipf_s: float = 0.8
    drift_period: int = 0
    drift_mode: str = "rotate"  # or "shuffle": fresh permutations, never realigns
    split_fraction: float | None = None
    interval_seconds: float = 300.0


def init_uts(rng: np.random.Generator, count: int, bs_count: int, tau: float) -> list[UTProfile]:
    """Terminals pinned to uniformly random cells for the first interval."""
    uts = []
    for d in range(count):
        b = int(rng.integers(0, bs_count))
        dwell = np.zeros(bs_count)
        dwell[b] = tau
        uts.append(UTProfile(ut_id=d, dwell=dwell, current_bs=b))
    return uts


def step_mobility(
    rng: np.random.Generator, uts: list[UTProfile], bs_count: int, params: WorkloadParams
) -> None:
    """Advance every terminal one interval.

    With probability ``p_stay`` a terminal spends the whole interval in its
    current cell; otherwise it moves to a uniformly chosen ring-adjacent cell
    at a split point (fixed fraction of the interval if configured, uniform
    otherwise). Updates dwell vectors and current cells in place.
    """
    tau = params.interval_seconds
    for ut in uts:
        dwell = np.zeros(bs_count)
        if bs_count == 1 or rng.uniform() < params.p_stay:
            dwell[ut.current_bs] = tau
        else:
            step = 1 if rng.uniform() < 0.5 else -1
            nxt = (ut.current_bs + step) % bs_count
            frac = params.split_fraction if params.split_fraction is not None else float(rng.uniform())
            dwell[ut.current_bs] += frac * tau
            dwell[nxt] += (1.0 - frac) * tau
            ut.current_bs = nxt
        ut.dwell = dwell


def group_uts(uts: list[UTProfile], n_groups: int, max_iters: int = 50) -> np.ndarray:
    """Cluster terminals by dwell pattern (k-means, Euclidean).

    Seeding is farthest-point starting from the pattern farthest from the
    global mean, so the partition depends only on the multiset of patterns,
    not on terminal ordering. Empty clusters are re-seeded with the point
    farthest from its assigned centroid. Labels are written back to the
    profiles and returned.
    """
    if n_groups < 1:
        raise ValueError("need at least one group")
    if len(uts) < n_groups:
        raise ValueError(f"cannot form {n_groups} groups from {len(uts)} terminals")
    pts = np.stack([ut.dwell for ut in uts])

    def farthest(dist2: np.ndarray) -> int:
        best = np.max(dist2)
        ties = np.flatnonzero(dist2 >= best - 1e-12)
        rows = [tuple(pts[i]) for i in ties]
        return int(ties[rows.index(min(rows))])

    centroids = [pts[farthest(((pts - pts.mean(axis=0)) ** 2).sum(axis=1))]]
    while len(centroids) < n_groups:
        d2 = np.min(
            np.stack([((pts - c) ** 2).sum(axis=1) for c in centroids]), axis=0
        )
        centroids.append(pts[farthest(d2)])
    centers = np.stack(centroids)

    labels: np.ndarray | None = None
    for _ in range(max_iters):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for k in range(n_groups):
            if not np.any(new_labels == k):
                assigned = d2[np.arange(len(uts)), new_labels]
                new_labels[farthest(assigned)] = k
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(n_groups):
            centers[k] = pts[labels == k].mean(axis=0)
    for ut, lab in zip(uts, labels):
        ut.group = int(lab)
    return labels


def zipf_weights(count: int, s: float) -> np.ndarray:
    w = (np.arange(1, count + 1, dtype=float)) ** (-s)
    return w / w.sum()


def realize_snapshot(
    rng: np.random.Generator,
    uts: list[UTProfile],
    params: WorkloadParams,
    n_groups: int,
    chunk_perms: np.ndarray,
) -> Snapshot:
    """Draw one interval of actual demand.

    Every terminal emits Poisson(rate) tasks at its longest-dwell cell; each
    task requests the chunk at a Zipf-drawn popularity rank of that cell's
    permutation. ``chunk_perms[b, r]`` is the chunk holding rank ``r`` at BS
    ``b``.
    """
    B, I = chunk_perms.shape
    x = np.zeros((n_groups, B), dtype=np.int64)
    counts = np.zeros((B, I), dtype=np.int64)
    weights = zipf_weights(I, params.zipf_s)
    for ut in uts:
        k = int(rng.poisson(params.rate_task))
        if k == 0:
            continue
        b = int(np.argmax(ut.dwell))
        x[ut.group, b] += k
        ranks = rng.choice(I, size=k, p=weights)
        for r in ranks:
            counts[b, chunk_perms[b, r]] += 1
    p = np.zeros((B, I))
    totals = counts.sum(axis=1)
    nonzero = totals > 0
    p[nonzero] = counts[nonzero] / totals[nonzero, None]
    return Snapshot(x=x, p=p)


def predict(
    history: list[Snapshot],
    mode: str = "ema",
    weight: float = 0.5,
    actual_next: Snapshot | None = None,
) -> Snapshot:
    """Next-interval demand estimate.

    ``oracle`` returns the actual next snapshot (for isolating planner tests
    from prediction error); ``ema`` folds an exponential moving average over
    the history, rounding task counts half-up and renormalizing request
    rows. The most recent snapshot is last in ``history``.
    """
    if mode == "oracle":
        if actual_next is None:
            raise ValueError("oracle prediction requires the actual next snapshot")
        return Snapshot(x=actual_next.x.copy(), p=actual_next.p.copy())
    if not history:
        raise ValueError("cannot predict from an empty history")
    ema_x = history[0].x.astype(float)
    ema_p = history[0].p.copy()
    for snap in history[1:]:
        ema_x = weight * snap.x + (1.0 - weight) * ema_x
        ema_p = weight * snap.p + (1.0 - weight) * ema_p
    x = round_half_up(ema_x).astype(np.int64)
    p = np.zeros_like(ema_p)
    totals = ema_p.sum(axis=1)
    nonzero = totals > 0
    p[nonzero] = ema_p[nonzero] / totals[nonzero, None]
    return Snapshot(x=x, p=p)


@dataclass
class WorkloadModel:
    """Owns the mutable demand state of one episode."""

    rng_mobility: np.random.Generator
    rng_chunks: np.random.Generator
    uts: list[UTProfile]
    params: WorkloadParams
    n_groups: int
    chunk_perms: np.ndarray
    interval: int = 0
    history: list[Snapshot] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        rng_mobility: np.random.Generator,
        rng_chunks: np.random.Generator,
        ut_count: int,
        n_groups: int,
        bs_count: int,
        chunk_count: int,
        params: WorkloadParams,
    ) -> "WorkloadModel":
        uts = init_uts(rng_mobility, ut_count, bs_count, params.interval_seconds)
        group_uts(uts, n_groups)
        perms = np.stack([rng_chunks.permutation(chunk_count) for _ in range(bs_count)])
        return cls(
            rng_mobility=rng_mobility,
            rng_chunks=rng_chunks,
            uts=uts,
            params=params,
            n_groups=n_groups,
            chunk_perms=perms,
        )

    def advance(self) -> Snapshot:
        """Move terminals, drift popularity on period boundaries, draw demand."""
        self.interval += 1
        if self.interval > 1:
            step_mobility(self.rng_mobility, self.uts, self.chunk_perms.shape[0], self.params)
        if self.params.drift_period and self.interval > 1 and (self.interval - 1) % self.params.drift_period == 0:
            if self.params.drift_mode == "shuffle":
                I = self.chunk_perms.shape[1]
                self.chunk_perms = np.stack(
                    [self.rng_chunks.permutation(I) for _ in range(self.chunk_perms.shape[0])]
                )
            else:
                self.chunk_perms = np.roll(self.chunk_perms, 1, axis=1)
        snap = realize_snapshot(self.rng_chunks, self.uts, self.params, self.n_groups, self.chunk_perms)
        return snap

    def push_history(self, snap: Snapshot) -> None:
        self.history.append(snap)
