"""Storage reservation search by particle swarm, one interval at a time.

A particle position is a candidate storage reservation over the edge servers.
Each evaluation runs the full pipeline (placement, task matching, usage
accounting) and scores the per-task weighted usage; the swarm tracks personal
and global bests. Positions move continuously but are snapped to whole-chunk
multiples after each step, because only the chunk count a reservation buys
affects placement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import AppProfile, ReservationDecision, UsageBreakdown, Weights, total_usage
from .storage import Placement, build_placement
from .assignment import MatchInfo, assign_tasks
from .topology import Topology


@dataclass
class PsoConfig:
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    particles: int = 8
    max_iters: int = 30
    early_stop: bool = True
    patience: int = 10

    def __post_init__(self):
        if not 0.0 <= self.inertia < 1.0:
            raise ValueError("inertia must lie in [0, 1)")
        if self.particles < 1 or self.max_iters < 1:
            raise ValueError("need at least one particle and one iteration")


@dataclass
class Particle:
    position: np.ndarray
    speed: np.ndarray
    best_position: np.ndarray
    best_score: float


@dataclass
class PlanResult:
    """Best reservation found for one interval, with swarm diagnostics."""

    decision: ReservationDecision
    placement: Placement
    usage: UsageBreakdown
    objective: float
    best_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged_at: int = 0
    match_info: MatchInfo | None = None


def _grid_caps(topology: Topology, app: AppProfile) -> np.ndarray:
    return np.array(
        [topology.servers[e].storage_cap for e in range(topology.edge_count)], dtype=float
    )


def _snap(g: np.ndarray, caps: np.ndarray, chunk_bits: float) -> np.ndarray:
    snapped = np.floor(g / chunk_bits + 0.5) * chunk_bits
    return np.minimum(snapped, np.floor(caps / chunk_bits) * chunk_bits)


def _random_position(rng: np.random.Generator, caps: np.ndarray, chunk_bits: float) -> np.ndarray:
    max_chunks = np.floor(caps / chunk_bits).astype(np.int64)
    return np.array([rng.integers(0, mc + 1) for mc in max_chunks], dtype=float) * chunk_bits


def pso_step(
    particle: Particle,
    global_best: np.ndarray,
    rng: np.random.Generator,
    config: PsoConfig,
    caps: np.ndarray,
    chunk_bits: float,
) -> np.ndarray:
    """Advance one particle and return the grid point it should be scored at.

    The random pull strengths are drawn per dimension. A particle leaving the
    feasible box is replaced at a fresh uniform position. The particle keeps
    its continuous position so the swarm dynamics are not quantized; only the
    returned evaluation point snaps to whole-chunk multiples, because nothing
    between grid points changes the placement.
    """
    phi1 = rng.uniform(size=particle.position.shape)
    phi2 = rng.uniform(size=particle.position.shape)
    speed = (
        config.inertia * particle.speed
        + config.cognitive * phi1 * (particle.best_position - particle.position)
        + config.social * phi2 * (global_best - particle.position)
    )
    # clamp per-dimension speed to half the box, or nearly every step overshoots
    # the (small) feasible box and degenerates into uniform resampling
    v_max = 0.5 * caps
    particle.speed = np.clip(speed, -v_max, v_max)
    g = particle.position + particle.speed
    if np.any(g < 0.0) or np.any(g > caps):
        g = _random_position(rng, caps, chunk_bits)
    particle.position = g
    return _snap(g, caps, chunk_bits)


def evaluate(
    g: np.ndarray,
    x: np.ndarray,
    p: np.ndarray,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
) -> PlanResult:
    """Score one storage reservation: placement, matching, usage, objective."""
    placement = build_placement(g, x, p, topology, app)
    f, c, info = assign_tasks(x, p, placement, topology, app, weights)
    decision = ReservationDecision(c=c, g=np.asarray(g, dtype=float).copy(), f=f)
    usage = total_usage(decision, placement, topology, app, weights, groups=x.shape[0])
    return PlanResult(
        decision=decision,
        placement=placement,
        usage=usage,
        objective=usage.delta_per_task,
        match_info=info,
    )


def plan_reservation(
    x: np.ndarray,
    p: np.ndarray,
    topology: Topology,
    app: AppProfile,
    weights: Weights,
    config: PsoConfig,
    rng: np.random.Generator,
) -> PlanResult:
    """Full single-interval reservation solve.

    Particles start uniformly on the chunk grid with zero speed; the global
    best is re-evaluated once at the end so the returned decision, usage and
    objective are exactly consistent with the returned storage vector. The
    best score never increases across iterations.
    """
    caps = _grid_caps(topology, app)
    L = app.chunk_bits

    particles: list[Particle] = []
    best_g: np.ndarray | None = None
    best_score = np.inf
    for _ in range(config.particles):
        pos = _random_position(rng, caps, L)
        score = evaluate(pos, x, p, topology, app, weights).objective
        particles.append(
            Particle(position=pos, speed=np.zeros_like(pos), best_position=pos.copy(), best_score=score)
        )
        if score < best_score:
            best_score = score
            best_g = pos.copy()

    history = [best_score]
    converged_at = 0
    stale = 0
    iterations = 0
    for it in range(1, config.max_iters + 1):
        iterations = it
        improved = False
        for particle in particles:
            point = pso_step(particle, best_g, rng, config, caps, L)
            score = evaluate(point, x, p, topology, app, weights).objective
            if score < particle.best_score:
                particle.best_score = score
                particle.best_position = point.copy()
            if score < best_score:
                best_score = score
                best_g = point.copy()
                improved = True
        history.append(best_score)
        if improved:
            converged_at = it
            stale = 0
        else:
            stale += 1
            if config.early_stop and stale >= config.patience:
                break

    result = evaluate(best_g, x, p, topology, app, weights)
    result.best_history = history
    result.iterations = iterations
    result.converged_at = converged_at
    return result
