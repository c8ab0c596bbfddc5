from __future__ import annotations

import pytest

from aec.domain import GoalConstraints, entails
from aec.hypotheses import Hypothesis
from aec.store import GroundedFact, GroundedStore, Provenance
from aec.verifier import (AuditEntry, Counterexample, CounterexampleKind, Verdict,
                          brute_force_feasible, check_pre, pullback_verify, repair, verify)

from conftest import A

P1 = A("in(o1,c1)")
HOLD = GoalConstraints.parse("holding(o1)")


def plan(micro, *steps):
    return tuple(micro.parse_action(s) for s in steps)


def take_h(micro, **extra):
    pre = {P1: True, A("handempty()"): True, **extra}
    return Hypothesis("h", plan(micro, "open(c1)", "take(o1,c1)"), tuple(pre.items()))


# -- check_pre ---------------------------------------------------------------

def test_grounded_precondition_passes(micro):
    h = Hypothesis("h", plan(micro, "open(c1)"), ((P1, True),))
    v = check_pre(h, GroundedStore.from_values({P1: True}), micro.rule_set)
    assert v.passed and v.audit == (AuditEntry("pre", str(P1), "pass", "grounded"),)


def test_belief_is_not_evidence(micro):
    h = Hypothesis("h", plan(micro, "open(c1)"), ((P1, True),))
    v = check_pre(h, GroundedStore(), micro.rule_set)
    assert not v.passed and v.failures()[0].source == "uncovered"


def test_entailed_precondition_passes(micro):
    w = GroundedStore.from_values({A("in(o1,c2)"): True})
    h = Hypothesis("h", plan(micro, "open(c1)"), ((P1, False), (A("cold(o1)"), True)))
    assert entails(w, A("cold(o1)"), micro.rule_set) is True
    v = check_pre(h, w, micro.rule_set)
    assert v.passed
    assert {e.source for e in v.audit} == {"entailed:excl", "entailed:fridge_cold"}


def test_opposite_values_are_named(micro):
    w = GroundedStore.from_values({P1: False, A("in(o1,c2)"): True})
    h = Hypothesis("h", plan(micro, "open(c1)"), ((P1, True), (A("cold(o1)"), False)))
    sources = sorted(e.source for e in check_pre(h, w, micro.rule_set).failures())
    assert sources == ["entailed:fridge_cold-opposite", "grounded-opposite"]


# -- pullback ----------------------------------------------------------------

def test_no_precondition_plan_reaching_goal(micro):
    h = Hypothesis("h", plan(micro, "open(c1)"), ())
    assert pullback_verify(h, GroundedStore(), GoalConstraints.parse("open(c1)"), micro).passed


def test_step_two_uncovered(micro):
    w = GroundedStore.from_values({P1: True, A("handempty()"): True})
    h = Hypothesis("h", plan(micro, "open(c2)", "take(o1,c1)"), ())
    v = pullback_verify(h, w, HOLD, micro)
    assert not v.passed
    assert v.audit[-1].subject == "1:take(o1,c1)"
    assert v.audit[-1].source == "open(c1) uncovered"


def test_goal_miss_agrees_with_brute_force(micro):
    w = {P1: True, A("handempty()"): True, A("open(c1)"): False}
    h = Hypothesis("h", plan(micro, "open(c1)"), ())
    v = pullback_verify(h, GroundedStore.from_values(w), HOLD, micro)
    assert not v.passed and v.audit[-1].check == "goal"
    truth = {a: False for a in micro.ground_atoms} | w | {A("in(o2,c2)"): True, A("cold(o2)"): True}
    assert not brute_force_feasible(h, truth, micro, HOLD)


# -- verify ------------------------------------------------------------------

def test_verify_passes_when_both_checks_pass(micro):
    w = GroundedStore.from_values({P1: True, A("handempty()"): True})
    v = verify(take_h(micro), w, HOLD, micro)
    assert v.passed
    assert [e.check for e in v.audit] == ["pre", "pre", "step", "step", "goal"]


def test_verify_short_circuits(micro):
    v = verify(take_h(micro), GroundedStore.from_values({P1: True}), HOLD, micro)
    assert not v.passed and all(e.check == "pre" for e in v.audit)


def test_verify_fails_on_pullback(micro):
    # Annotation omits handempty, the plan still needs it.
    h = Hypothesis("h", plan(micro, "open(c1)", "take(o1,c1)"), ((P1, True),))
    v = verify(h, GroundedStore.from_values({P1: True}), HOLD, micro)
    assert not v.passed and v.audit[-1].check == "step"


def test_passing_verdict_cannot_hide_failures():
    with pytest.raises(ValueError):
        Verdict(True, (AuditEntry("pre", "x()", "fail", "uncovered"),))


# -- brute force -------------------------------------------------------------

def test_brute_force(micro):
    truth = {a: False for a in micro.ground_atoms}
    truth |= {P1: True, A("handempty()"): True, A("in(o2,c2)"): True, A("cold(o2)"): True}
    assert brute_force_feasible(take_h(micro), truth, micro, HOLD)
    truth[P1], truth[A("in(o1,c2)")], truth[A("cold(o1)")] = False, True, True
    assert not brute_force_feasible(take_h(micro), truth, micro, HOLD)


# -- repair ------------------------------------------------------------------

def _blame(rule, n):
    return [Counterexample(CounterexampleKind.ENTAILMENT_CONTRADICTION, P1, False, True, rule)
            for _ in range(n)]


def test_one_contradiction_keeps_rule(micro):
    on = micro.with_rules(enable=["closed_empty"])
    schema, _ = repair(_blame("closed_empty", 1), on, GroundedStore(), threshold=2)
    assert "closed_empty" not in schema.disabled_rules


def test_two_contradictions_disable_rule(micro):
    on = micro.with_rules(enable=["closed_empty"])
    w = {A("open(c1)"): False}
    assert entails(w, P1, on.rule_set) is False
    schema, _ = repair(_blame("closed_empty", 2), on, GroundedStore(), threshold=2)
    assert "closed_empty" in schema.disabled_rules
    assert entails(w, P1, schema.rule_set) is None


def test_execution_evidence_overrides_grounded_value(micro):
    w = GroundedStore([GroundedFact(P1, True, Provenance.QUERY)])
    cx = Counterexample(CounterexampleKind.EXECUTION_CONTRADICTION, P1, True, False)
    _, w2 = repair([cx], micro, w)
    assert w2[P1] is False and w2.provenance(P1) is Provenance.FEEDBACK


def test_counterexample_round_trip():
    cx = _blame("excl", 1)[0]
    assert Counterexample.from_dict(cx.to_dict()) == cx


# -- rule tightening ---------------------------------------------------------

def test_fewer_rules_only_turn_passes_into_failures(micro):
    """Disabling rules never makes verify pass where it failed before.

    Hypotheses are pooled per goal across all start worlds and checked on
    every correct store of every world.
    """
    from aec.environment import HiddenWorld, candidate_goals, micro_worlds, visible_facts
    from aec.harness import _correct_stores
    from aec.hypotheses import generate_hypotheses
    tight = micro.with_rules(disable=["excl", "fridge_cold"])
    worlds = [HiddenWorld(micro, t) for t in micro_worlds()]
    pool: dict[str, set] = {}
    for world in worlds:
        w0 = visible_facts(world)
        for goal in candidate_goals(world):
            pool.setdefault(str(goal), set()).update(generate_hypotheses(w0, goal, micro))
    flips = 0
    for world in worlds:
        stores = _correct_stores(world.truth, visible_facts(world))
        for goal in candidate_goals(world):
            for h in pool[str(goal)]:
                for w in stores:
                    full = verify(h, w, goal, micro).passed
                    less = verify(h, w, goal, tight).passed
                    assert full or not less
                    flips += full and not less
    assert flips > 0


def test_repair_shrinks_entailed_set(micro):
    on = micro.with_rules(enable=["closed_empty"])
    repaired, _ = repair(_blame("closed_empty", 2) + _blame("excl", 3), on, GroundedStore())
    stores = [{A("open(c1)"): False}, {A("in(o1,c2)"): True}, {A("holding(o2)"): True}]
    for w in stores:
        assert repaired.rule_set.closure(w).pairs() <= on.rule_set.closure(w).pairs()
