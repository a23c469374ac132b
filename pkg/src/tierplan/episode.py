"""Episode orchestration: demand, planning, realization, metrics.

Each interval: move the terminals, draw the actual demand (hidden from the
planner), predict from history, let the strategy plan, then score the plan
against the actual demand. The gap between planned and realized usage is the
point of the closed loop and is logged per interval. Learning strategies
additionally score the branch they did not take, at interval end, to label
similarity pairs and feed the replay buffer.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assignment import assign_tasks
from .baselines import Strategy, brute_force_plan, myopic_reconfigure, tier_first_plan
from .cost import ReservationDecision, total_usage, verify_constraints
from .reconfig import IntervalPlan, ReconfigAgent
from .reservation import plan_reservation
from .scenario import Scenario, rng_streams
from .workload import Snapshot, WorkloadModel, predict

CSV_COLUMNS = (
    "k",
    "action",
    "reconfig_cost",
    "delta",
    "planned_delta",
    "delta_per_task",
    "objective_per_task",
    "usage_compute",
    "usage_storage",
    "usage_uplink",
    "usage_downlink",
    "usage_remote",
    "tasks_actual",
    "tasks_predicted",
    "prediction_error",
    "compute_overload",
    "violations",
)

LEARNING_STRATEGIES = (Strategy.SIM_DQN, Strategy.RAW_DQN)


@dataclass
class IntervalMetrics:
    k: int
    action: int
    reconfig_cost: float
    delta: float
    planned_delta: float
    delta_per_task: float
    objective_per_task: float
    usage_compute: float
    usage_storage: float
    usage_uplink: float
    usage_downlink: float
    usage_remote: float
    tasks_actual: int
    tasks_predicted: int
    prediction_error: float
    compute_overload: int
    violations: int

    def row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            out.append(repr(float(v)) if isinstance(v, float) else str(int(v)))
        return out


def write_csv(path, rows: list[IntervalMetrics]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(m.row()) for m in rows)
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class RealizedOutcome:
    usage: object
    f: dict
    overload: int


def realize_decision(
    g: np.ndarray,
    placement,
    planned_c: np.ndarray,
    actual: Snapshot,
    topology,
    app,
    weights,
) -> RealizedOutcome:
    """Score a committed reservation against the demand that actually arrived.

    Chunks were already placed and compute reserved when the interval began,
    so storage and placement are frozen; the task assignment is re-derived
    for the actual demand. Actual loads above the reserved compute are
    counted as overload (a logged metric, not an error).
    """
    f, c_real, _info = assign_tasks(actual.x, actual.p, placement, topology, app, weights)
    decision = ReservationDecision(c=planned_c, g=g, f=f)
    usage = total_usage(decision, placement, topology, app, weights, groups=actual.x.shape[0])
    overload = int(np.sum(usage.loads * app.task_cycles / app.tau_p > planned_c.T + 1e-9))
    return RealizedOutcome(usage=usage, f=f, overload=overload)


class EpisodeDriver:
    """Runs one strategy through the intervals of one episode."""

    def __init__(self, scenario: Scenario, strategy: Strategy, agent: ReconfigAgent | None = None,
                 seed: int | None = None, learn: bool = True):
        self.scenario = scenario
        self.strategy = Strategy(strategy)
        self.topology = scenario.topology()
        self.app = scenario.app()
        self.weights = scenario.weights()
        self.pso_cfg = scenario.pso_config()
        self.agent = agent
        self.learn = learn
        streams = rng_streams(scenario.seed if seed is None else seed)
        self.rng_mobility = np.random.default_rng(streams["mobility"])
        self.rng_chunks = np.random.default_rng(streams["chunks"])
        self.rng_pso = np.random.default_rng(streams["pso"])
        self.rng_learn = np.random.default_rng(streams["learning"])
        wl = scenario.section("workload")
        self.predictor = wl["predictor"]
        self.ema_weight = wl["ema_weight"]
        self.history_window = int(wl["history_window"])
        self.model = WorkloadModel.create(
            self.rng_mobility,
            self.rng_chunks,
            ut_count=int(wl["ut_count"]),
            n_groups=int(wl["group_count"]),
            bs_count=self.topology.bs_count,
            chunk_count=self.app.chunk_count,
            params=scenario.workload_params(),
        )
        if self.strategy in LEARNING_STRATEGIES and agent is None:
            raise ValueError(f"strategy {self.strategy.value} needs an agent")
        self._cache: tuple[np.ndarray, np.ndarray, object] | None = None  # (g, c, placement)

    # -- plumbing ---------------------------------------------------------------

    def _planner(self, snap: Snapshot):
        return plan_reservation(
            snap.x, snap.p, self.topology, self.app, self.weights, self.pso_cfg, self.rng_pso
        )

    def _assign_under(self, snap: Snapshot, g: np.ndarray, placement) -> dict:
        f, _c, _info = assign_tasks(snap.x, snap.p, placement, self.topology, self.app, self.weights)
        return f

    def _planned_usage(self, snap: Snapshot, g, c, f, placement):
        decision = ReservationDecision(c=c, g=g, f=f)
        return total_usage(decision, placement, self.topology, self.app, self.weights,
                           groups=snap.x.shape[0])

    # -- strategy dispatch --------------------------------------------------------

    def _plan(self, k: int, predicted: Snapshot) -> IntervalPlan:
        s = self.strategy
        if s in (Strategy.SWARM, Strategy.ALWAYS):
            res = self._planner(predicted)
            return IntervalPlan(0, res.decision.g, res.decision.c, res.decision.f,
                                res.placement, True, None, usage=res.usage)
        if s in (Strategy.BS_FIRST, Strategy.NAP_FIRST, Strategy.EQUAL):
            res = tier_first_plan(s, predicted.x, predicted.p, self.topology, self.app, self.weights)
            return IntervalPlan(0, res.decision.g, res.decision.c, res.decision.f,
                                res.placement, True, None, usage=res.usage)
        if s is Strategy.BRUTE_FORCE:
            res = brute_force_plan(predicted.x, predicted.p, self.topology, self.app, self.weights)
            return IntervalPlan(0, res.decision.g, res.decision.c, res.decision.f,
                                res.placement, True, None, usage=res.usage)
        if s is Strategy.NEVER:
            if self._cache is None:
                res = self._planner(predicted)
                self._cache = (res.decision.g, res.decision.c, res.placement)
                return IntervalPlan(0, res.decision.g, res.decision.c, res.decision.f,
                                    res.placement, True, None, usage=res.usage)
            g, c, placement = self._cache
            f = self._assign_under(predicted, g, placement)
            return IntervalPlan(1, g, c, f, placement, False, None)
        if s is Strategy.MYOPIC:
            if self._cache is None:
                res = self._planner(predicted)
                self._cache = (res.decision.g, res.decision.c, res.placement)
                return IntervalPlan(0, res.decision.g, res.decision.c, res.decision.f,
                                    res.placement, True, None, usage=res.usage)
            g, c, placement = self._cache
            fresh = self._planner(predicted)
            stale_f = self._assign_under(predicted, g, placement)
            stale_usage = self._planned_usage(predicted, g, c, stale_f, placement)
            action = myopic_reconfigure(
                fresh.usage.delta, stale_usage.delta,
                self.weights.reconfig_weight, self.weights.reconfig_cost,
            )
            if action == 0:
                self._cache = (fresh.decision.g, fresh.decision.c, fresh.placement)
                return IntervalPlan(0, fresh.decision.g, fresh.decision.c, fresh.decision.f,
                                    fresh.placement, True, None, usage=fresh.usage)
            return IntervalPlan(1, g, c, stale_f, placement, False, None)
        if s in LEARNING_STRATEGIES:
            return self.agent.plan_interval(k, predicted, self._planner, self._assign_under)
        raise ValueError(f"unhandled strategy {s}")

    # -- the loop ---------------------------------------------------------------

    def run(self) -> tuple[list[IntervalMetrics], dict]:
        K = self.scenario.intervals
        rows: list[IntervalMetrics] = []
        if self.agent is not None:
            self.agent.begin_episode()
        for k in range(1, K + 1):
            actual = self.model.advance()
            if self.predictor == "oracle":
                predicted = predict([], mode="oracle", actual_next=actual)
            else:
                history = self.model.history[-self.history_window:] or [actual]
                predicted = predict(history, mode="ema", weight=self.ema_weight)
            plan = self._plan(k, predicted)

            o_v = self.weights.reconfig_cost if plan.pays_reconfig else 0.0
            planned_usage = plan.usage or self._planned_usage(
                predicted, plan.g, plan.c, plan.f, plan.placement
            )
            realized = realize_decision(
                plan.g, plan.placement, plan.c, actual, self.topology, self.app, self.weights
            )
            pred_total = predicted.task_total
            objective = (
                (realized.usage.delta + self.weights.reconfig_weight * o_v) / pred_total
                if pred_total else 0.0
            )
            violations = 0
            if plan.pays_reconfig:
                planned = ReservationDecision(c=plan.c, g=plan.g, f=plan.f)
                violations = len(verify_constraints(
                    planned, predicted.x, plan.placement, self.topology, self.app, self.weights
                ))
            rows.append(IntervalMetrics(
                k=k,
                action=plan.action,
                reconfig_cost=o_v,
                delta=realized.usage.delta,
                planned_delta=planned_usage.delta,
                delta_per_task=realized.usage.delta_per_task,
                objective_per_task=objective,
                usage_compute=float(realized.usage.compute.sum()),
                usage_storage=float(realized.usage.storage.sum()),
                usage_uplink=float(realized.usage.uplink.sum()),
                usage_downlink=float(realized.usage.downlink.sum()),
                usage_remote=float(realized.usage.remote.sum()),
                tasks_actual=actual.task_total,
                tasks_predicted=pred_total,
                prediction_error=float(np.abs(predicted.x - actual.x).sum()),
                compute_overload=realized.overload,
                violations=violations,
            ))

            if self.agent is not None and self.learn:
                delta_fresh, delta_stale = self._branch_deltas(plan, predicted, actual, realized)
                self.agent.observe(
                    k, plan.action, actual, objective, delta_fresh, delta_stale,
                    self.weights.reconfig_weight, self.weights.reconfig_cost, done=(k == K),
                )
            elif self.agent is not None:
                self.agent.record_status(actual)

            self.model.push_history(actual)

        summary = {
            "episode_objective": float(sum(m.objective_per_task for m in rows)),
            "delta_total": float(sum(m.delta for m in rows)),
            "reconfigurations": int(sum(1 for m in rows if m.action == 0)),
            "violations": int(sum(m.violations for m in rows)),
            "overloads": int(sum(m.compute_overload for m in rows)),
        }
        return rows, summary

    def _branch_deltas(self, plan: IntervalPlan, predicted: Snapshot, actual: Snapshot,
                       realized: RealizedOutcome) -> tuple[float | None, float | None]:
        """Realized usage of the fresh and stale branches for labeling."""
        if plan.action == 0:
            fresh = realized.usage.delta
            if plan.prior is None:
                return fresh, None
            other = realize_decision(
                plan.prior.g, plan.prior.placement, plan.prior.c, actual,
                self.topology, self.app, self.weights,
            )
            return fresh, other.usage.delta
        stale = realized.usage.delta
        fresh_plan = self._planner(predicted)
        other = realize_decision(
            fresh_plan.decision.g, fresh_plan.placement, fresh_plan.decision.c, actual,
            self.topology, self.app, self.weights,
        )
        return other.usage.delta, stale


def run_episode(scenario: Scenario, strategy, agent: ReconfigAgent | None = None,
                seed: int | None = None, learn: bool = True):
    return EpisodeDriver(scenario, strategy, agent=agent, seed=seed, learn=learn).run()


def make_agent(scenario: Scenario, strategy, rng: np.random.Generator | None = None) -> ReconfigAgent:
    strategy = Strategy(strategy)
    mode = "latent" if strategy is Strategy.SIM_DQN else "raw"
    wl = scenario.section("workload")
    if rng is None:
        rng = np.random.default_rng(rng_streams(scenario.seed)["learning"])
    return ReconfigAgent(
        mode=mode,
        n_groups=int(wl["group_count"]),
        bs_count=scenario.topology().bs_count,
        chunk_count=scenario.app().chunk_count,
        config=scenario.learn_config(),
        rng=rng,
    )


def train_agent(scenario: Scenario, strategy, episodes: int,
                agent: ReconfigAgent | None = None) -> tuple[ReconfigAgent, list[dict]]:
    """Train across episodes; episode seeds derive from the scenario seed."""
    agent = agent or make_agent(scenario, strategy)
    summaries = []
    for ep in range(episodes):
        _rows, summary = run_episode(scenario, strategy, agent=agent, seed=scenario.seed + ep)
        summary["episode"] = ep
        summaries.append(summary)
    return agent, summaries


def evaluate_policy(scenario: Scenario, strategy, agent: ReconfigAgent, seed: int):
    """One greedy episode: no exploration, no learning."""
    eps, training = agent.eps, agent.training
    agent.eps = 0.0
    agent.training = False
    try:
        rows, summary = run_episode(scenario, strategy, agent=agent, seed=seed, learn=False)
    finally:
        agent.eps = eps
        agent.training = training
    return rows, summary
