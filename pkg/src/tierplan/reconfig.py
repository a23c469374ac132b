"""Closed-loop reservation reconfiguration.

Each interval the agent chooses between replanning (paying a fixed switching
cost) and reusing the reservation in force. The policy is a small Q-network;
its state is either the latent similarity between the current network-status
features and those at the last replan (computed by a trained twin-tower net)
or, for the raw variant, the normalized predicted task distribution itself.
At interval end both branches are scored on the actual demand, producing the
similarity labels and the reward signal; both networks train every interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, Mlp, RmsProp, SiameseNet, bce_grad, mse_td_grad, save_params, load_params
from .reservation import PlanResult
from .workload import Snapshot

LABEL_RULES = ("stale-still-good", "as-printed")


@dataclass
class LearnConfig:
    feature_window: int = 3
    discount: float = 0.95
    eps_start: float = 1.0
    eps_decay: float = 0.995
    eps_floor: float = 0.05
    label_rule: str = "stale-still-good"
    norm_warmup: int = 20
    target_refresh: int = 50
    batch: int = 32
    siamese_lr: float = 1e-3
    q_lr: float = 1e-3
    replay_capacity: int = 5000
    pair_capacity: int = 2000
    latent_width: int = 16
    q_batches_per_step: int = 1
    embed_widths: tuple[int, ...] = (64, 64, 32)
    q_widths: tuple[int, ...] = (128, 512, 128, 32)

    def __post_init__(self):
        if self.label_rule not in LABEL_RULES:
            raise ValueError(f"label_rule must be one of {LABEL_RULES}")


def label_pair(delta_fresh: float, delta_stale: float, lam: float, reconfig_cost: float,
               rule: str = "stale-still-good") -> int:
    """Similarity label from the realized cost of both branches.

    ``stale-still-good`` (default): the two statuses count as similar when
    keeping the old reservation costs at most the weighted switching cost
    more than replanning. ``as-printed`` applies the published inequality
    verbatim, which marks statuses similar when replanning is much *worse*;
    both are kept selectable because the published form reads inverted
    against its own prose.
    """
    if rule == "as-printed":
        return 1 if delta_fresh - delta_stale > lam * reconfig_cost else 0
    return 1 if delta_stale - delta_fresh <= lam * reconfig_cost else 0


def similarity(ha: np.ndarray, hb: np.ndarray, net: SiameseNet) -> tuple[float, np.ndarray]:
    """Similarity score and latent vector for one feature pair."""
    score, latent, _ = net.forward_pair(ha, hb)
    return float(score[0]), latent[0]


def decide(state: np.ndarray, qnet: Mlp, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties resolve to replanning (action 0)."""
    if rng.uniform() < eps:
        return int(rng.integers(0, 2))
    q, _ = qnet.forward(state)
    return 0 if q[0, 0] >= q[0, 1] else 1


class RunningNorm:
    """Per-feature standardization with stats frozen after a warmup."""

    def __init__(self, width: int, warmup: int):
        self.width = width
        self.warmup = warmup
        self.count = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def update(self, vec: np.ndarray) -> None:
        if self.count >= self.warmup:
            return
        self.count += 1
        delta = vec - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (vec - self.mean)

    def transform(self, vec: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return vec.copy()
        var = self.m2 / self.count
        return (vec - self.mean) / (np.sqrt(var) + 1e-8)

    def state(self) -> list[np.ndarray]:
        return [np.array([self.count], dtype=float), self.mean.copy(), self.m2.copy()]

    def restore(self, arrays: list[np.ndarray]) -> None:
        self.count = int(arrays[0][0])
        self.mean = arrays[1].copy()
        self.m2 = arrays[2].copy()


@dataclass
class Replay:
    capacity: int
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    next_states: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def push(self, s, a, cost, s_next, done):
        if len(self.states) >= self.capacity:
            for buf in (self.states, self.actions, self.costs, self.next_states, self.dones):
                buf.pop(0)
        self.states.append(np.asarray(s, dtype=float))
        self.actions.append(int(a))
        self.costs.append(float(cost))
        self.next_states.append(np.asarray(s_next, dtype=float))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.states)


@dataclass
class CachedPlan:
    """Reservation currently in force: frozen compute/storage plus the chunk
    placement committed when it was made."""

    interval: int
    g: np.ndarray
    c: np.ndarray
    placement: object
    features: np.ndarray


@dataclass
class IntervalPlan:
    action: int
    g: np.ndarray
    c: np.ndarray
    f: dict
    placement: object
    pays_reconfig: bool
    prior: CachedPlan | None
    usage: object | None = None


class ReconfigAgent:
    """Owns the nets, buffers, and per-episode reconfiguration state.

    ``mode='latent'`` is the similarity-driven agent; ``mode='raw'`` is the
    ablation whose Q input is the normalized predicted task distribution.
    The planning half (branch evaluation, realized costs) lives in the
    episode driver; the agent only decides, caches, and learns.
    """

    def __init__(
        self,
        mode: str,
        n_groups: int,
        bs_count: int,
        chunk_count: int,
        config: LearnConfig,
        rng: np.random.Generator,
    ):
        if mode not in ("latent", "raw"):
            raise ValueError("mode must be 'latent' or 'raw'")
        self.mode = mode
        self.config = config
        self.rng = rng
        self.n_groups = n_groups
        self.h_width = n_groups * bs_count + bs_count * chunk_count
        self.feature_width = config.feature_window * self.h_width
        self.x_width = n_groups * bs_count

        self.siamese = SiameseNet(
            self.feature_width, rng, embed_widths=config.embed_widths, latent_width=config.latent_width
        ) if mode == "latent" else None
        q_in = config.latent_width if mode == "latent" else self.x_width
        self.qnet = Mlp([q_in] + list(config.q_widths) + [2], rng)
        self.q_target = Mlp([q_in] + list(config.q_widths) + [2], rng)
        self._sync_target()

        self.siamese_opt = RmsProp(lr=config.siamese_lr)
        self.q_opt = Adam(lr=config.q_lr)
        self.h_norm = RunningNorm(self.h_width, config.norm_warmup)
        self.x_norm = RunningNorm(self.x_width, config.norm_warmup)
        self.eps = config.eps_start
        self.replay = Replay(capacity=config.replay_capacity)
        self.pairs: list[tuple[np.ndarray, np.ndarray, int]] = []
        self.q_updates = 0

        self.training = True
        self.force_schedule: dict[int, int] | None = None  # test hook: k -> action
        self._h_window: list[np.ndarray] = []
        self.cache: CachedPlan | None = None
        self._pending: dict | None = None

    # -- episode plumbing ---------------------------------------------------

    def begin_episode(self) -> None:
        self._h_window = []
        self.cache = None
        self._pending = None

    def _sync_target(self) -> None:
        for dst, src in zip(self.q_target.params, self.qnet.params):
            dst[...] = src

    def features_now(self) -> np.ndarray:
        """Window of the last T' observed statuses, normalized, zero-padded."""
        T = self.config.feature_window
        window = self._h_window[-T:]
        parts = [self.h_norm.transform(h) for h in window]
        pad = T - len(parts)
        if pad:
            parts = [np.zeros(self.h_width)] * pad + parts
        return np.concatenate(parts)

    def state_for(self, features: np.ndarray, predicted: Snapshot) -> np.ndarray:
        anchor = self.cache.features if self.cache is not None else features
        self._last_anchor = anchor.copy()
        self._last_features = features.copy()
        if self.mode == "raw":
            return self.x_norm.transform(predicted.x.astype(float).ravel())
        _score, latent = similarity(features, anchor, self.siamese)
        return latent

    # -- the per-interval decision -------------------------------------------

    def plan_interval(self, k: int, predicted: Snapshot, planner, assigner) -> IntervalPlan:
        """Choose the action for interval ``k`` and produce the decision.

        ``planner(predicted)`` runs a fresh reservation solve and returns a
        PlanResult; ``assigner(predicted, g, placement)`` re-derives the task
        assignment under a frozen reservation so the conservation constraint
        holds for the new interval. The first interval always replans.
        """
        features = self.features_now()
        state = self.state_for(features, predicted)

        if self._pending is not None and self.training:
            p = self._pending
            self.replay.push(p["state"], p["action"], p["cost"], state, False)
            self._pending = None
            self._train_q()

        if k == 1 or self.cache is None:
            action = 0
        elif self.force_schedule is not None:
            action = self.force_schedule.get(k, 1)
        else:
            action = decide(state, self.qnet, self.eps, self.rng)

        prior = self.cache
        if action == 0:
            result: PlanResult = planner(predicted)
            self.cache = CachedPlan(
                interval=k,
                g=result.decision.g.copy(),
                c=result.decision.c.copy(),
                placement=result.placement,
                features=features.copy(),
            )
            plan = IntervalPlan(
                action=0,
                g=result.decision.g,
                c=result.decision.c,
                f=result.decision.f,
                placement=result.placement,
                pays_reconfig=True,
                prior=prior,
                usage=result.usage,
            )
        else:
            f = assigner(predicted, self.cache.g, self.cache.placement)
            plan = IntervalPlan(
                action=1,
                g=self.cache.g,
                c=self.cache.c,
                f=f,
                placement=self.cache.placement,
                pays_reconfig=False,
                prior=prior,
            )
        self._last_state = state
        return plan

    # -- end-of-interval learning ---------------------------------------------

    def observe(
        self,
        k: int,
        action: int,
        actual: Snapshot,
        cost: float,
        delta_fresh: float | None,
        delta_stale: float | None,
        lam: float,
        reconfig_cost: float,
        done: bool,
    ) -> None:
        """Fold the interval's outcome into the buffers and train.

        ``delta_fresh`` and ``delta_stale`` are the realized usage of the two
        branches on the actual demand; the stale side is None on the first
        interval (no prior reservation existed).
        """
        if not self.training:
            self.record_status(actual)
            return
        h = np.concatenate([actual.x.astype(float).ravel(), actual.p.ravel()])
        self.h_norm.update(h)
        self.x_norm.update(actual.x.astype(float).ravel())

        if delta_fresh is not None and delta_stale is not None and self.mode == "latent":
            label = label_pair(delta_fresh, delta_stale, lam, reconfig_cost, self.config.label_rule)
            self.pairs.append((self._last_features.copy(), self._last_anchor.copy(), label))
            if len(self.pairs) > self.config.pair_capacity:
                self.pairs.pop(0)

        self._h_window.append(h)

        if done:
            next_state = np.zeros_like(self._last_state)
            self.replay.push(self._last_state, action, cost, next_state, True)
            self._pending = None
        else:
            self._pending = {"state": self._last_state, "action": action, "cost": cost}

        self._train_siamese()
        if done:
            self._train_q()
        self.eps = max(self.config.eps_floor, self.eps * self.config.eps_decay)

    def record_status(self, actual: Snapshot) -> None:
        """Keep the feature window moving without touching any buffers."""
        h = np.concatenate([actual.x.astype(float).ravel(), actual.p.ravel()])
        self._h_window.append(h)
        self._pending = None

    # -- training -------------------------------------------------------------

    # once the batch separates cleanly, further updates only saturate the
    # sigmoid while RMSprop's normalized steps keep dragging the latents, so
    # the Q net would chase a forever-moving state space
    SIAMESE_FIT_LOSS = 0.05

    def _train_siamese(self) -> None:
        if self.mode != "latent" or len(self.pairs) < 2:
            return
        idx = self.rng.integers(0, len(self.pairs), size=min(self.config.batch, len(self.pairs)))
        ha = np.stack([self.pairs[i][0] for i in idx])
        hb = np.stack([self.pairs[i][1] for i in idx])
        labels = np.array([self.pairs[i][2] for i in idx], dtype=float)
        loss, grads = bce_grad(self.siamese, ha, hb, labels)
        if loss < self.SIAMESE_FIT_LOSS:
            return
        self.siamese_opt.step(self.siamese.params, grads)

    def _train_q(self) -> None:
        if len(self.replay) < 2:
            return
        for _ in range(self.config.q_batches_per_step):
            idx = self.rng.integers(0, len(self.replay), size=min(self.config.batch, len(self.replay)))
            states = np.stack([self.replay.states[i] for i in idx])
            actions = np.array([self.replay.actions[i] for i in idx])
            costs = np.array([self.replay.costs[i] for i in idx])
            next_states = np.stack([self.replay.next_states[i] for i in idx])
            dones = np.array([self.replay.dones[i] for i in idx], dtype=float)
            q_next, _ = self.q_target.forward(next_states)
            targets = -costs + self.config.discount * q_next.max(axis=1) * (1.0 - dones)
            _loss, grads = mse_td_grad(self.qnet, states, actions, targets)
            self.q_opt.step(self.qnet.params, grads)
            self.q_updates += 1
            if self.q_updates % self.config.target_refresh == 0:
                self._sync_target()

    # -- persistence ------------------------------------------------------------

    def save(self, prefix) -> None:
        """Write <prefix>_q.npz (policy, target, norms, eps) and, for the
        latent mode, <prefix>_siamese.npz; replay goes to <prefix>_replay.npz."""
        extras = [np.array([self.eps]), *self.h_norm.state(), *self.x_norm.state()]
        save_params(f"{prefix}_q.npz", self.qnet.params + self.q_target.params + extras)
        if self.siamese is not None:
            save_params(f"{prefix}_siamese.npz", self.siamese.params)
        if len(self.replay):
            np.savez(
                f"{prefix}_replay.npz",
                states=np.stack(self.replay.states),
                actions=np.array(self.replay.actions),
                costs=np.array(self.replay.costs),
                next_states=np.stack(self.replay.next_states),
                dones=np.array(self.replay.dones),
            )

    def load(self, prefix) -> None:
        blob = load_params(f"{prefix}_q.npz")
        n = len(self.qnet.params)
        for dst, src in zip(self.qnet.params, blob[:n]):
            dst[...] = src
        for dst, src in zip(self.q_target.params, blob[n : 2 * n]):
            dst[...] = src
        extras = blob[2 * n :]
        self.eps = float(extras[0][0])
        self.h_norm.restore(extras[1:4])
        self.x_norm.restore(extras[4:7])
        if self.siamese is not None:
            for dst, src in zip(self.siamese.params, load_params(f"{prefix}_siamese.npz")):
                dst[...] = src
