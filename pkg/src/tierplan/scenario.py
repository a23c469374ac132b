"""Scenario files: a strict JSON tree of sections, keys, units, defaults.

Unknown keys anywhere are hard errors (they are almost always typos), and a
scenario that builds an invalid topology reports every structural violation
at once. All sizes are bits, rates are cycles per second, times are seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost import AppProfile, Weights
from .reconfig import LABEL_RULES, LearnConfig
from .reservation import PsoConfig
from .topology import Topology, build_topology, validate
from .workload import WorkloadParams

GB = 8e9

# section -> key -> default; None means "required" (nothing is, currently)
SCHEMA: dict[str, dict[str, object]] = {
    "topology": {
        "bs_count": 4,
        "nap_groups": None,  # default: split the BS range evenly over 2 NAPs
        "bs_compute": 0.9e9,
        "nap_compute": 2.0e9,
        "bs_storage": 0.75 * GB,
        "nap_storage": 1.5 * GB,
        "nap_uplink": None,
        "nap_downlink": None,
        "cn_uplink": None,
        "cn_downlink": None,
        "compute_unit_cost": [1.0, 1.0, 1.0],
        "storage_unit_cost": [0.5, 0.8, 1.0],
        "eta_nap": 5e-9,
        "eta_cn": 9e-9,
        "xi_bs_nap": 2.5e-9,
        "xi_bs_cn": 6e-9,
        "xi_nap_cn": 3.5e-9,
    },
    "app": {
        "alpha_bits": 1.6e7,
        "beta_cycles_per_bit": 0.25,
        "gamma_bits": 1.2e8,
        "chunk_bits": 0.15 * GB,
        "remote_bits": 0.15 * GB,
        "chunk_count": 20,
        "interval_seconds": 300.0,
        "compute_deadline_seconds": 0.5,
    },
    "weights": {
        "compute": 1.0,
        "storage": 0.5e-7,
        "comm": 1.0,
        "reconfig_weight": 12.0,
        "reconfig_cost": 5.0,
        "remote_budget": "auto",  # "auto", null (unbounded), scalar, or per-group list
        "remote_budget_fraction": 0.05,
        "cn_storage_in_objective": False,
    },
    "workload": {
        "ut_count": 600,
        "group_count": 3,
        "p_stay": 0.8,
        "rate_task": 0.25,
        "zipf_s": 0.8,
        "drift_period": 0,
        "drift_mode": "rotate",
        "split_fraction": None,
        "history_window": 3,
        "predictor": "ema",
        "ema_weight": 0.5,
    },
    "pso": {
        "inertia": 0.7,
        "cognitive": 1.5,
        "social": 1.5,
        "particles": 8,
        "iterations": 30,
        "early_stop": True,
        "patience": 10,
    },
    "learning": {
        "feature_window": 3,
        "discount": 0.95,
        "eps_start": 1.0,
        "eps_decay": 0.995,
        "eps_floor": 0.05,
        "label_rule": "stale-still-good",
        "norm_warmup": 20,
        "target_refresh": 50,
        "batch": 32,
        "siamese_lr": 1e-3,
        "q_lr": 1e-3,
        "replay_capacity": 5000,
        "pair_capacity": 2000,
        "latent_width": 16,
        "q_batches_per_step": 1,
        "embed_widths": [64, 64, 32],
        "q_widths": [128, 512, 128, 32],
    },
    "episode": {
        "intervals": 40,
        "seed": 0,
    },
}


class ScenarioError(Exception):
    """Invalid scenario; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class Scenario:
    raw: dict = field(repr=False, default_factory=dict)

    def section(self, name: str) -> dict:
        return self.raw[name]

    # -- builders -------------------------------------------------------------

    def topology(self) -> Topology:
        t = self.section("topology")
        groups = t["nap_groups"]
        if groups is None:
            B = t["bs_count"]
            half = (B + 1) // 2
            groups = [list(range(half)), list(range(half, B))] if B > 1 else [[0]]
            groups = [g for g in groups if g]
        return build_topology(
            t["bs_count"],
            [list(g) for g in groups],
            bs_compute=t["bs_compute"],
            nap_compute=t["nap_compute"],
            bs_storage=t["bs_storage"],
            nap_storage=t["nap_storage"],
            nap_uplink=t["nap_uplink"],
            nap_downlink=t["nap_downlink"],
            cn_uplink=t["cn_uplink"],
            cn_downlink=t["cn_downlink"],
            compute_unit_cost=tuple(t["compute_unit_cost"]),
            storage_unit_cost=tuple(t["storage_unit_cost"]),
            eta_nap=t["eta_nap"],
            eta_cn=t["eta_cn"],
            xi_bs_nap=t["xi_bs_nap"],
            xi_bs_cn=t["xi_bs_cn"],
            xi_nap_cn=t["xi_nap_cn"],
        )

    def app(self) -> AppProfile:
        a = self.section("app")
        return AppProfile(
            alpha=a["alpha_bits"],
            beta=a["beta_cycles_per_bit"],
            gamma=a["gamma_bits"],
            chunk_bits=a["chunk_bits"],
            remote_bits=a["remote_bits"],
            chunk_count=int(a["chunk_count"]),
            tau=a["interval_seconds"],
            tau_p=a["compute_deadline_seconds"],
        )

    def weights(self) -> Weights:
        w = self.section("weights")
        wl = self.section("workload")
        budget = w["remote_budget"]
        groups = int(wl["group_count"])
        if budget == "auto":
            per_group_load = wl["ut_count"] * wl["rate_task"] / groups
            a = self.section("app")
            t = self.section("topology")
            value = (
                w["remote_budget_fraction"]
                * per_group_load
                * w["comm"]
                * a["remote_bits"]
                * t["xi_bs_cn"]
            )
            budget_vec = tuple([value] * groups)
        elif budget is None:
            budget_vec = None
        elif isinstance(budget, (int, float)):
            budget_vec = tuple([float(budget)] * groups)
        else:
            budget_vec = tuple(float(v) for v in budget)
        return Weights(
            compute_w=w["compute"],
            storage_w=w["storage"],
            comm_w=w["comm"],
            reconfig_weight=w["reconfig_weight"],
            reconfig_cost=w["reconfig_cost"],
            remote_budget=budget_vec,
            cn_storage_in_objective=bool(w["cn_storage_in_objective"]),
        )

    def workload_params(self) -> WorkloadParams:
        wl = self.section("workload")
        return WorkloadParams(
            p_stay=wl["p_stay"],
            rate_task=wl["rate_task"],
            zipf_s=wl["zipf_s"],
            drift_period=int(wl["drift_period"]),
            drift_mode=wl["drift_mode"],
            split_fraction=wl["split_fraction"],
            interval_seconds=self.section("app")["interval_seconds"],
        )

    def pso_config(self) -> PsoConfig:
        p = self.section("pso")
        return PsoConfig(
            inertia=p["inertia"],
            cognitive=p["cognitive"],
            social=p["social"],
            particles=int(p["particles"]),
            max_iters=int(p["iterations"]),
            early_stop=bool(p["early_stop"]),
            patience=int(p["patience"]),
        )

    def learn_config(self) -> LearnConfig:
        l = self.section("learning")
        return LearnConfig(
            feature_window=int(l["feature_window"]),
            discount=l["discount"],
            eps_start=l["eps_start"],
            eps_decay=l["eps_decay"],
            eps_floor=l["eps_floor"],
            label_rule=l["label_rule"],
            norm_warmup=int(l["norm_warmup"]),
            target_refresh=int(l["target_refresh"]),
            batch=int(l["batch"]),
            siamese_lr=l["siamese_lr"],
            q_lr=l["q_lr"],
            replay_capacity=int(l["replay_capacity"]),
            pair_capacity=int(l["pair_capacity"]),
            latent_width=int(l["latent_width"]),
            q_batches_per_step=int(l["q_batches_per_step"]),
            embed_widths=tuple(int(v) for v in l["embed_widths"]),
            q_widths=tuple(int(v) for v in l["q_widths"]),
        )

    @property
    def intervals(self) -> int:
        return int(self.section("episode")["intervals"])

    @property
    def seed(self) -> int:
        return int(self.section("episode")["seed"])


def lint(raw: dict) -> list[str]:
    """Every schema violation in the scenario tree, without building anything."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        return ["scenario root must be a JSON object"]
    for section in raw:
        if section not in SCHEMA:
            problems.append(f"unknown section '{section}'")
            continue
        if not isinstance(raw[section], dict):
            problems.append(f"section '{section}' must be an object")
            continue
        for key in raw[section]:
            if key not in SCHEMA[section]:
                problems.append(f"unknown key '{section}.{key}'")
    return problems


def load_scenario(source) -> Scenario:
    """Build a Scenario from a path, JSON text, or dict; raises ScenarioError."""
    if isinstance(source, Scenario):
        return source
    if isinstance(source, dict):
        raw = source
    else:
        try:
            is_file = Path(str(source)).exists()
        except OSError:
            is_file = False
        text = Path(source).read_text() if is_file else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise ScenarioError([f"not valid JSON: {err}"]) from err
    problems = lint(raw)
    if problems:
        raise ScenarioError(problems)

    merged = {}
    for section, keys in SCHEMA.items():
        merged[section] = dict(keys)
        merged[section].update(raw.get(section, {}))
    scenario = Scenario(raw=merged)

    problems = cross_check(scenario)
    if problems:
        raise ScenarioError(problems)
    return scenario


def cross_check(scenario: Scenario) -> list[str]:
    problems: list[str] = []
    wl = scenario.section("workload")
    if wl["group_count"] < 1:
        problems.append("workload.group_count must be >= 1")
    if wl["ut_count"] < wl["group_count"]:
        problems.append("workload.ut_count must be >= group_count")
    if wl["drift_mode"] not in ("rotate", "shuffle"):
        problems.append("workload.drift_mode must be 'rotate' or 'shuffle'")
    if wl["predictor"] not in ("ema", "oracle"):
        problems.append("workload.predictor must be 'ema' or 'oracle'")
    if scenario.section("learning")["label_rule"] not in LABEL_RULES:
        problems.append(f"learning.label_rule must be one of {LABEL_RULES}")
    if scenario.intervals < 0:
        problems.append("episode.intervals must be >= 0")
    t = scenario.section("topology")
    if t["bs_count"] < 1:
        problems.append("topology.bs_count must be >= 1")
    else:
        try:
            topo = scenario.topology()
        except (ValueError, IndexError) as err:
            problems.append(f"topology does not assemble: {err}")
        else:
            problems.extend(validate(topo))
        try:
            scenario.app()
        except ValueError as err:
            problems.append(str(err))
    return problems


def default_scenario(**episode_overrides) -> Scenario:
    raw: dict = {}
    if episode_overrides:
        raw["episode"] = episode_overrides
    return load_scenario(raw)


def rng_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Named root sequences so toggling one consumer never shifts another."""
    root = np.random.SeedSequence(seed)
    names = ("mobility", "chunks", "pso", "learning")
    children = root.spawn(len(names))
    return dict(zip(names, children))
