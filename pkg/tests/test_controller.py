from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aec.config import config_from_dict
from aec.controller import (ControllerConfig, Mode, assert_no_leakage, commit_gate_violations,
                            gate_violations, leakage_violations, run_episode,
                            select_precondition)
from aec.domain import GoalConstraints
from aec.environment import EnvInstanceConfig, Environment, HiddenWorld, OracleConfig
from aec.harness import run_episodes
from aec.hypotheses import Hypothesis
from aec.predictor import SyntheticPredictor, SyntheticPredictorConfig

from conftest import A

P1, P2, P3 = A("in(o1,c1)"), A("in(o1,c2)"), A("cold(o1)")


def _h(hid, pre, micro):
    return Hypothesis(hid, (micro.ground("open", "c1"),), tuple(pre.items()))


# -- selection ---------------------------------------------------------------

def test_selection_prefers_most_discordant_pairs(micro):
    hs = [_h("a", {P1: True, P2: True}, micro), _h("b", {P1: True, P2: True}, micro),
          _h("c", {P1: False, P2: True}, micro), _h("d", {P1: False, P2: False}, micro)]
    # P1 splits 2 vs 2 (4 pairs); P2 splits 3 vs 1 (3 pairs).
    assert select_precondition({P1, P2}, hs) == P1


def test_selection_single_hypothesis_is_lexicographic(micro):
    h = _h("a", {P1: True, P2: True, P3: True}, micro)
    assert select_precondition({P3, P2, P1}, [h]) == P3  # "cold(o1)" sorts first


def test_selection_singleton_and_empty(micro):
    assert select_precondition({P2}, []) == P2
    with pytest.raises(ValueError):
        select_precondition(set(), [])


@pytest.mark.parametrize("kwargs", [{"tau": 1.5}, {"epsilon": 0.6}, {"max_queries": -1},
                                    {"replan_cap": -1}, {"mode": "Sometimes"}])
def test_controller_config_validation(kwargs):
    with pytest.raises(ValueError):
        ControllerConfig(**kwargs)


def test_no_gating_never_queries_from_the_gate():
    assert ControllerConfig(mode=Mode.NO_GATING).gate() == (0.0, float("inf"))


# -- single episodes ---------------------------------------------------------

def _episode(micro, truth_overrides, goal, *, accuracy=1.0, noise=0.0, mode=Mode.AEC, **ctl):
    truth = {a: False for a in micro.ground_atoms}
    truth |= {A("in(o1,c1)"): True, A("in(o2,c2)"): True, A("cold(o2)"): True,
              A("handempty()"): True}
    truth |= truth_overrides
    world = HiddenWorld(micro, truth)
    env = Environment(world, GoalConstraints.parse(goal), EnvInstanceConfig(), OracleConfig(),
                      np.random.default_rng(0))
    pred = SyntheticPredictor(SyntheticPredictorConfig(accuracy=accuracy, noise_scale=noise),
                              world, np.random.default_rng(1))
    out = run_episode(env, micro, GoalConstraints.parse(goal), pred,
                      ControllerConfig(mode=mode, **ctl))
    return out, pred


def test_perfect_predictor_succeeds_without_replanning(micro):
    out, pred = _episode(micro, {}, "holding(o1)")
    assert out.success and out.replanning_rounds == 0
    # Gate queries never happen; any query fills a verification gap.
    assert all(e["reason"] == "gap" for e in out.trace if e["event"] == "query")
    assert pred.inputs


def test_infeasible_goal_fails(micro):
    out, _ = _episode(micro, {}, "holding(o1), holding(o2)")
    assert not out.success and out.failure == "no_hypotheses"
    assert out.replanning_rounds == ControllerConfig().replan_cap


def test_predictor_sees_only_grounded_facts(micro):
    out, pred = _episode(micro, {}, "cold(o1)", accuracy=0.6, noise=1.0)
    assert assert_no_leakage(out.trace)
    beliefs_seen = [set(e["beliefs"]) for e in out.trace if e["event"] == "predict"]
    for (p, inputs), beliefs in zip(pred.inputs, beliefs_seen):
        assert not {str(a) for a in inputs} & beliefs


@pytest.mark.parametrize("mode", list(Mode))
def test_mode_signatures(micro, mode):
    out, _ = _episode(micro, {}, "cold(o1)", accuracy=0.7, noise=1.0, mode=mode)
    events = {e["event"] for e in out.trace}
    reasons = {e["reason"] for e in out.trace if e["event"] == "query"}
    if mode is Mode.DIRECT:
        assert out.queries_used == 0 and "verify" not in events and "predict" not in events
    if mode is Mode.QUERY_ONLY:
        assert "predict" not in events and reasons <= {"forced", "gap"}
    if mode is Mode.NO_VERIFICATION:
        assert "verify" not in events
    if mode is Mode.NO_GATING:
        assert "gate" not in reasons
    assert not commit_gate_violations(out.trace)
    assert not gate_violations(out.trace)


# -- trace audits ------------------------------------------------------------

def test_leakage_audit_flags_belief_inputs():
    ok = [{"event": "predict", "inputs": ["open(c1)"], "beliefs": ["in(o1,c1)"]}]
    bad = [{"event": "verify", "inputs": ["in(o1,c1)"], "beliefs": ["in(o1,c1)"]}]
    assert assert_no_leakage(ok)
    assert not assert_no_leakage(bad) and leakage_violations(bad) == bad


def test_gate_audit_flags_wrong_branch():
    pred = {"event": "predict", "episode": 0, "p": "x()", "mu": 0.5, "sigma": 0.0,
            "epsilon": 0.1, "tau": 0.5, "branch": "simulate"}
    follow = {"event": "simulate", "episode": 0, "p": "x()"}
    assert gate_violations([pred, follow]) == [pred]
    fixed = {**pred, "branch": "query"}
    assert gate_violations([fixed, {**follow, "event": "query"}]) == []


def test_commit_gate_audit_requires_passing_verify():
    commit = {"event": "commit", "gated": True, "round": 0, "hypothesis": {"id": "h000"}}
    assert commit_gate_violations([{"event": "start"}, commit]) == [commit]
    verify = {"event": "verify", "passed": True, "hypothesis": "h000", "round": 0}
    assert commit_gate_violations([{"event": "start"}, verify, commit]) == []


# -- corpus-level invariants -------------------------------------------------

@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), accuracy=st.sampled_from([0.5, 0.7, 0.9]),
       eps=st.sampled_from([0.0, 0.05]), max_queries=st.integers(0, 4),
       replan_cap=st.integers(0, 3), mode=st.sampled_from(list(Mode)))
def test_outcome_invariants(seed, accuracy, eps, max_queries, replan_cap, mode):
    cfg = config_from_dict({
        "seed": seed, "episodes": 20,
        "controller": {"mode": mode.value, "max_queries": max_queries,
                       "replan_cap": replan_cap},
        "predictor": {"accuracy": accuracy},
        "oracle": {"error_rates": {"*": eps}}})
    for rec in run_episodes(cfg, keep_traces=True):
        assert rec.queries_used <= max_queries * (rec.rounds_used + 1)
        assert rec.replanning_rounds <= replan_cap
        assert rec.leakage_violations == rec.gate_violations == rec.commit_gate_violations == 0
        kept = None
        for e in map(json.loads, rec.trace):
            if e["event"] == "generate":
                kept = {h["id"] for h in e["hypotheses"]}
            elif e["event"] == "filter":
                assert set(e["kept"]) <= kept
                kept = set(e["kept"])
        if eps == 0.0 and mode.gated:
            assert rec.infeasible_commits == 0


def test_uninformative_predictor_behaves_like_query_only():
    """With sigma high and a low threshold, almost every prediction is queried."""
    base = {"seed": 2, "episodes": 1000,
            "controller": {"tau": 0.1},
            "predictor": {"accuracy": 0.5, "noise_scale": 20.0}}
    aec = run_episodes(config_from_dict(base), keep_traces=True)
    qo = run_episodes(config_from_dict({**base, "controller": {"mode": "QueryOnly"}}))
    branches = [json.loads(x)["branch"] for r in aec for x in r.trace if '"predict"' in x]
    assert np.mean([b == "query" for b in branches]) > 0.9
    q_aec = np.mean([r.queries_used for r in aec])
    q_qo = np.mean([r.queries_used for r in qo])
    assert abs(q_aec - q_qo) <= 0.1 * q_qo
