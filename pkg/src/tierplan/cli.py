"""Command-line interface.

Subcommands: ``validate`` lints a scenario file; ``plan`` solves one interval
and prints the reservation; ``simulate`` runs an episode with a chosen
strategy and writes per-interval metrics CSV; ``train`` runs multi-episode
training for the learning strategies with checkpoints; ``oracle`` solves one
interval exactly (refusing oversized instances). Exit codes: 0 ok, 1 usage
error, 2 guard refusal or invalid scenario, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .baselines import InstanceTooLarge, Strategy, brute_force_plan
from .episode import CSV_COLUMNS, make_agent, run_episode, train_agent, write_csv
from .reservation import plan_reservation
from .scenario import Scenario, ScenarioError, load_scenario, rng_streams
from .workload import WorkloadModel, predict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REFUSED = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tierplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override episode.seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("validate", help="lint a scenario file")
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("plan", help="single-interval reservation solve")
    common(p)

    p = sub.add_parser("simulate", help="run one episode with a strategy")
    common(p)
    p.add_argument("--strategy", default="always", choices=[s.value for s in Strategy])

    p = sub.add_parser("train", help="multi-episode training for a learning strategy")
    common(p)
    p.add_argument("--strategy", default="sim-dqn", choices=["sim-dqn", "raw-dqn"])
    p.add_argument("--episodes", type=int, default=60)

    p = sub.add_parser("oracle", help="exact single-interval solve on a small instance")
    common(p)
    return parser


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.section("episode")["seed"] = int(args.seed)
    return scenario


def _first_snapshot(scenario: Scenario):
    """The first interval's demand, planned with oracle knowledge (the CLI's
    single-interval commands exist to inspect the planner, not prediction)."""
    streams = rng_streams(scenario.seed)
    wl = scenario.section("workload")
    model = WorkloadModel.create(
        np.random.default_rng(streams["mobility"]),
        np.random.default_rng(streams["chunks"]),
        ut_count=int(wl["ut_count"]),
        n_groups=int(wl["group_count"]),
        bs_count=scenario.topology().bs_count,
        chunk_count=scenario.app().chunk_count,
        params=scenario.workload_params(),
    )
    actual = model.advance()
    return predict([], mode="oracle", actual_next=actual)


def _print_plan(result, app) -> None:
    chunks = (result.decision.g / app.chunk_bits).astype(int)
    print(f"storage_chunks_per_edge_server: {' '.join(map(str, chunks))}")
    print(f"compute_cycles_per_second_total: {repr(float(result.decision.c.sum()))}")
    print(f"tasks_assigned: {sum(result.decision.f.values())}")
    print(f"delta: {repr(result.usage.delta)}")
    print(f"delta_per_task: {repr(result.usage.delta_per_task)}")


def cmd_validate(args) -> int:
    try:
        load_scenario(args.scenario)
    except ScenarioError as err:
        for problem in err.problems:
            print(f"violation: {problem}", file=sys.stderr)
        return EXIT_REFUSED
    print("scenario ok")
    return EXIT_OK


def cmd_plan(args) -> int:
    scenario = _scenario(args)
    snap = _first_snapshot(scenario)
    rng = np.random.default_rng(rng_streams(scenario.seed)["pso"])
    result = plan_reservation(
        snap.x, snap.p, scenario.topology(), scenario.app(), scenario.weights(),
        scenario.pso_config(), rng,
    )
    _print_plan(result, scenario.app())
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _scenario(args)
    snap = _first_snapshot(scenario)
    try:
        result = brute_force_plan(
            snap.x, snap.p, scenario.topology(), scenario.app(), scenario.weights()
        )
    except InstanceTooLarge as err:
        print(f"refused: {err}", file=sys.stderr)
        return EXIT_REFUSED
    _print_plan(result, scenario.app())
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    strategy = Strategy(args.strategy)
    agent = make_agent(scenario, strategy) if strategy.value.endswith("dqn") else None
    started = time.perf_counter()
    rows, summary = run_episode(scenario, strategy, agent=agent)
    elapsed = time.perf_counter() - started
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "metrics_ep000.csv", rows)
        _write_summary(out / "summary.csv", [summary])
        (out / "timing.txt").write_text(f"wall_seconds {elapsed:.3f}\n")
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_OK


def _write_summary(path, summaries: list[dict]) -> None:
    keys = sorted(summaries[0])
    lines = [",".join(keys)]
    for s in summaries:
        lines.append(",".join(repr(float(s[k])) if isinstance(s[k], float) else str(s[k]) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    scenario = _scenario(args)
    strategy = Strategy(args.strategy)
    started = time.perf_counter()
    agent, summaries = train_agent(scenario, strategy, episodes=args.episodes)
    elapsed = time.perf_counter() - started
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        agent.save(out / "checkpoint")
        _write_summary(out / "training.csv", summaries)
        (out / "timing.txt").write_text(f"wall_seconds {elapsed:.3f}\n")
    last = summaries[-1]
    print(f"episodes: {len(summaries)}")
    print(f"final_episode_objective: {last['episode_objective']}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "validate": cmd_validate,
        "plan": cmd_plan,
        "simulate": cmd_simulate,
        "train": cmd_train,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except ScenarioError as err:
        for problem in err.problems:
            print(f"violation: {problem}", file=sys.stderr)
        return EXIT_REFUSED
    except InstanceTooLarge as err:
        print(f"refused: {err}", file=sys.stderr)
        return EXIT_REFUSED
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
