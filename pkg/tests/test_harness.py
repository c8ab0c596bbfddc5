from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from aec.cli import audit_traces, main
from aec.config import ConfigError, config_from_dict, load_config
from aec.harness import (Theorem1Report, ablate, paired_comparison, run_corpus, run_episodes,
                         run_refinement)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# -- config ------------------------------------------------------------------

def test_every_shipped_config_loads():
    names = sorted(p.name for p in CONFIGS.glob("*.yaml"))
    assert names
    for name in names:
        load_config(CONFIGS / name)


@pytest.mark.parametrize("data, message", [
    ({"bogus": 1}, "unknown top-level"),
    ({"controller": {"tau": 2}}, "tau"),
    ({"env": {"domain": "kitchen"}}, "domain"),
    ({"episodes": 0}, "episodes"),
    ({"rules": {"enable": ["no_such_rule"]}}, "no_such_rule"),
    ({"oracle": {"error_rates": {"*": 1.5}}}, "error rate"),
])
def test_config_errors(data, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(data)


def test_config_round_trip():
    cfg = load_config(CONFIGS / "refinement.yaml")
    assert config_from_dict(cfg.to_dict()) == cfg


# -- determinism -------------------------------------------------------------

def _files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_single_episode_is_byte_identical(tmp_path):
    cfg = config_from_dict({"seed": 5, "episodes": 1, "oracle": {"error_rates": {"*": 0.05}}})
    run_corpus(replace(cfg, out_dir=str(tmp_path / "a")))
    run_corpus(replace(cfg, out_dir=str(tmp_path / "b")))
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_parallel_matches_serial():
    cfg = config_from_dict({"seed": 8, "episodes": 40, "env": {"domain": "household"},
                            "oracle": {"error_rates": {"*": 0.05}}})
    serial = run_episodes(cfg, keep_traces=True)
    parallel = run_episodes(replace(cfg, parallelism=2), keep_traces=True)
    assert [r.trace for r in serial] == [r.trace for r in parallel]


def test_modes_share_worlds_and_goals():
    cfg = config_from_dict({"seed": 4, "episodes": 30})
    a = run_episodes(cfg)
    b = run_episodes(cfg.with_mode("QueryOnly"))
    assert [r.goal for r in a] == [r.goal for r in b]


# -- statistics --------------------------------------------------------------

def test_theorem_report_arithmetic():
    commits = [{"feasible": i % 10 != 0, "bound": 0.99} for i in range(200)]
    t = Theorem1Report.from_commits(commits)
    assert t.empirical_feasibility == 0.9
    assert t.standard_error == pytest.approx(np.sqrt(0.9 * 0.1 / 200))
    assert not t.bound_satisfied and not t.inconclusive
    assert Theorem1Report.from_commits(commits[:50]).inconclusive


def test_bound_is_clipped_at_zero():
    t = Theorem1Report.from_commits([{"feasible": True, "bound": -0.5}] * 100)
    assert t.mean_bound == 0.0


def test_paired_comparison_matches_t_statistic():
    rng = np.random.default_rng(0)
    a = rng.normal(0.3, 1, 500)
    b = rng.normal(0.0, 1, 500)
    c = paired_comparison("x", a, b)
    res = stats.ttest_rel(a, b)
    assert c.mean_difference / c.standard_error == pytest.approx(res.statistic)
    assert c.greater and c.not_less
    with pytest.raises(ValueError):
        paired_comparison("x", [1.0], [0.0])


# -- directional checks on shared corpora ------------------------------------

def test_query_only_queries_at_least_as_much():
    cfg = config_from_dict({"seed": 13, "episodes": 1000})
    _, _, comps = ablate(cfg, ["AEC", "QueryOnly"])
    assert comps["QueryOnly"]["queries_used"].not_less


def test_direct_commits_more_infeasible_plans():
    cfg = config_from_dict({"seed": 13, "episodes": 1000, "predictor": {"accuracy": 0.6},
                            "oracle": {"error_rates": {"*": 0.02}}})
    reports, _, comps = ablate(cfg, ["AEC", "Direct"])
    assert reports["Direct"].infeasible_commit_rate >= reports["AEC"].infeasible_commit_rate
    assert comps["Direct"]["infeasible_commit"].greater


def test_single_refinement_iteration_applies_nothing():
    cfg = config_from_dict({"seed": 1, "episodes": 50, "iterations": 1,
                            "predictor": {"noise_scale": 0.05},
                            "rules": {"enable": ["closed_empty"]}})
    (report,) = run_refinement(cfg)
    assert report.noise_scale == 0.05 and report.disabled_rules == []


# -- outputs and CLI ---------------------------------------------------------

def test_outputs_and_leakage_audit(tmp_path):
    cfg = config_from_dict({"seed": 2, "episodes": 25, "out_dir": str(tmp_path)})
    report = run_corpus(cfg)
    assert {p.name for p in tmp_path.iterdir()} == {
        "traces.jsonl", "episodes.tsv", "report.json", "summary.txt"}
    assert json.loads((tmp_path / "report.json").read_text())["episodes"] == 25
    assert len((tmp_path / "episodes.tsv").read_text().splitlines()) == 26
    result = audit_traces(tmp_path)
    assert result["files"] == 1 and result["leakage_violations"] == 0
    assert result["events"] == sum(1 for _ in open(tmp_path / "traces.jsonl"))
    assert report.leakage_violations == 0


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(CONFIGS / "quickstart.yaml"),
                 "--episodes", "20", "--out", str(out)]) == 0
    assert main(["audit-leakage", str(out)]) == 0
    assert main(["validate-theorem1", "--episodes", "20", "--seed", "3"]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("controller: {epsilon: 0.9}\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["audit-leakage", str(tmp_path / "nowhere")]) == 2

    leaky = tmp_path / "leaky"
    leaky.mkdir()
    (leaky / "traces.jsonl").write_text(json.dumps(
        {"episode": 0, "event": "predict", "inputs": ["open(c1)"], "beliefs": ["open(c1)"],
         "p": "x()", "mu": 1.0, "sigma": 0.0, "epsilon": 0.1, "tau": 0.5,
         "branch": "simulate"}) + "\n")
    assert main(["audit-leakage", str(leaky)]) == 1
    capsys.readouterr()


def test_cli_ablate_and_refine(tmp_path, capsys):
    assert main(["ablate", "--episodes", "30", "--modes", "AEC", "Direct",
                 "--out", str(tmp_path / "ab")]) == 0
    assert (tmp_path / "ab" / "Direct" / "traces.jsonl").exists()
    assert (tmp_path / "ab" / "comparisons.json").exists()
    assert main(["refine", "--config", str(CONFIGS / "refinement.yaml"), "--episodes", "40",
                 "--out", str(tmp_path / "rf")]) == 0
    assert (tmp_path / "rf" / "counterexamples.jsonl").exists()
    text = capsys.readouterr().out
    assert "success by iteration" in text


def test_metrics_match_trace_recount():
    cfg = config_from_dict({"seed": 6, "episodes": 200, "predictor": {"accuracy": 0.6},
                            "oracle": {"error_rates": {"*": 0.05}}})
    records = run_episodes(cfg, keep_traces=True)
    report = run_corpus(cfg)
    successes = 0
    for r in records:
        events = [json.loads(x) for x in r.trace]
        successes += any(e["event"] == "success" for e in events)
        # Budget discipline: one query event per counted query.
        assert sum(e["event"] == "query" for e in events) == r.queries_used
        # Grounding only grows: every commit's Q contains the previous one's.
        qs = [set(e["Q"]) for e in events if e["event"] == "commit"]
        assert all(a <= b for a, b in zip(qs, qs[1:]))
    assert report.success_rate == pytest.approx(100.0 * successes / len(records))
