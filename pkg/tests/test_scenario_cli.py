import json
import subprocess
import sys

import numpy as np
import pytest

from tierplan.cli import main
from tierplan.episode import run_episode, write_csv
from tierplan.scenario import ScenarioError, default_scenario, load_scenario, rng_streams

TINY = {
    "topology": {"bs_count": 2, "nap_groups": [[0, 1]], "bs_compute": 4e7,
                 "nap_compute": 8e7, "bs_storage": 4e8, "nap_storage": 6e8},
    "app": {"chunk_count": 4, "chunk_bits": 2e8, "remote_bits": 2e8},
    "workload": {"ut_count": 12, "group_count": 1, "rate_task": 0.6, "predictor": "oracle"},
    "pso": {"particles": 3, "iterations": 5},
    "episode": {"intervals": 4, "seed": 3},
}


@pytest.fixture
def tiny_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path)


def test_defaults_load_clean():
    scn = default_scenario()
    assert scn.topology().bs_count == 4
    assert scn.app().chunk_count == 20
    assert scn.intervals == 40


def test_unknown_key_is_hard_error():
    with pytest.raises(ScenarioError) as err:
        load_scenario({"workload": {"rate_tsk": 1.0}})
    assert any("rate_tsk" in p for p in err.value.problems)


def test_unknown_section_is_hard_error():
    with pytest.raises(ScenarioError):
        load_scenario({"wrokload": {}})


def test_cross_checks_catch_bad_groups():
    with pytest.raises(ScenarioError) as err:
        load_scenario({"workload": {"ut_count": 2, "group_count": 5}})
    assert any("ut_count" in p for p in err.value.problems)


def test_auto_budget_scales_with_group_load():
    scn = load_scenario({"workload": {"ut_count": 100, "group_count": 2, "rate_task": 1.0}})
    w = scn.weights()
    expect = 0.05 * 50 * 1.0 * scn.app().remote_bits * 6e-9
    assert w.remote_budget == pytest.approx((expect, expect))


def test_rng_streams_are_stable_and_disjoint():
    a = rng_streams(7)
    b = rng_streams(7)
    for name in ("mobility", "chunks", "pso", "learning"):
        assert np.random.default_rng(a[name]).integers(0, 1 << 30) == \
               np.random.default_rng(b[name]).integers(0, 1 << 30)
    draws = {name: np.random.default_rng(a[name]).integers(0, 1 << 30) for name in a}
    assert len(set(draws.values())) == len(draws)


def test_validate_ok(tiny_path, capsys):
    assert main(["validate", "--scenario", tiny_path]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_rejects_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"workload": {"nope": 1}}))
    assert main(["validate", "--scenario", str(bad)]) == 2
    assert "nope" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["simulate"]) == 1  # missing --scenario
    assert main(["frobnicate"]) == 1


def test_plan_deterministic_output(tiny_path, capsys):
    assert main(["plan", "--scenario", tiny_path]) == 0
    first = capsys.readouterr().out
    assert main(["plan", "--scenario", tiny_path]) == 0
    second = capsys.readouterr().out
    assert first == second
    assert "delta_per_task" in first


def test_oracle_refusal_exit_code(tmp_path, capsys):
    big = dict(TINY)
    # 301 storage options on each of 3 edge servers: ~2.7e7 grid points
    big["app"] = {"chunk_count": 300, "chunk_bits": 1e6, "remote_bits": 1e6}
    path = tmp_path / "big.json"
    path.write_text(json.dumps(big))
    assert main(["oracle", "--scenario", str(path)]) == 2
    assert "refused" in capsys.readouterr().err


def test_simulate_writes_row_per_interval(tiny_path, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--scenario", tiny_path, "--strategy", "brute-force",
                 "--out", str(out)]) == 0
    lines = (out / "metrics_ep000.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + TINY["episode"]["intervals"]
    assert (out / "summary.csv").exists()
    assert (out / "timing.txt").exists()


def test_simulate_csv_byte_identical(tiny_path, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--scenario", tiny_path, "--strategy", "always",
                     "--out", str(out)]) == 0
        outs.append((out / "metrics_ep000.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_override_changes_stream(tiny_path, tmp_path):
    outs = []
    for seed in ("3", "4"):
        out = tmp_path / f"s{seed}"
        assert main(["simulate", "--scenario", tiny_path, "--strategy", "always",
                     "--seed", seed, "--out", str(out)]) == 0
        outs.append((out / "metrics_ep000.csv").read_bytes())
    assert outs[0] != outs[1]


def test_train_writes_checkpoint_and_log(tiny_path, tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--scenario", tiny_path, "--strategy", "raw-dqn",
                 "--episodes", "2", "--out", str(out)]) == 0
    assert (out / "checkpoint_q.npz").exists()
    assert (out / "training.csv").exists()


def test_console_entrypoint_runs(tiny_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tierplan.cli", "validate", "--scenario", tiny_path],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0


def test_zero_intervals_episode_is_empty():
    scn = load_scenario({**TINY, "episode": {"intervals": 0, "seed": 1}})
    rows, summary = run_episode(scn, "always")
    assert rows == []
    assert summary["episode_objective"] == 0.0


def test_objective_sum_matches_row_sum(tiny_path):
    scn = load_scenario(TINY)
    rows, summary = run_episode(scn, "myopic")
    assert summary["episode_objective"] == pytest.approx(
        sum(m.objective_per_task for m in rows), abs=1e-9
    )


def test_replay_reproduces_rows_exactly(tmp_path):
    scn = load_scenario(TINY)
    rows1, _ = run_episode(scn, "never")
    rows2, _ = run_episode(scn, "never")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(a, rows1)
    write_csv(b, rows2)
    assert a.read_bytes() == b.read_bytes()
