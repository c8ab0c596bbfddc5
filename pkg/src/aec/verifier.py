"""Grounded-only commitment gate, brute-force feasibility oracle and repair.

``verify`` is the conjunction of two checks run in a fixed order:

* ``check_pre``: every precondition of the hypothesis is grounded, or
  entailed from grounded facts, with the value the hypothesis expects.
* ``pullback_verify``: the plan is stepped symbolically from the grounded
  store. Each action's preconditions must hold in the state produced by the
  prefix before it (grounded, set by an earlier effect, or entailed), and the
  goal must hold at the end.

Neither check receives the belief store.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .domain import DomainSchema, GoalConstraints, RuleSet
from .hypotheses import Hypothesis
from .store import Atom, GroundedFact, GroundedStore, Provenance

__all__ = [
    "AuditEntry", "Counterexample", "CounterexampleKind", "Verdict",
    "brute_force_feasible", "check_pre", "pullback_verify", "repair", "verify",
]


class AuditEntry(NamedTuple):
    check: str
    subject: str
    outcome: str
    source: str

    @property
    def passed(self) -> bool:
        return self.outcome == "pass"


@dataclass(frozen=True)
class Verdict:
    passed: bool
    audit: tuple[AuditEntry, ...] = ()

    def __post_init__(self):
        if self.passed and not all(e.passed for e in self.audit):
            raise ValueError("a passing verdict cannot contain failed audit entries")

    def __bool__(self) -> bool:
        return self.passed

    def failures(self) -> tuple[AuditEntry, ...]:
        return tuple(e for e in self.audit if not e.passed)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "audit": [list(e) for e in self.audit]}


class CounterexampleKind(str, Enum):
    ENTAILMENT_CONTRADICTION = "EntailmentContradiction"
    GROUNDING_CONFLICT = "GroundingConflict"
    EXECUTION_CONTRADICTION = "ExecutionContradiction"


@dataclass(frozen=True)
class Counterexample:
    kind: CounterexampleKind
    predicate: Atom
    expected: bool
    observed: bool
    rule_id: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "predicate": str(self.predicate),
                "expected": int(self.expected), "observed": int(self.observed),
                "rule": self.rule_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> Counterexample:
        return cls(CounterexampleKind(d["kind"]), Atom.parse(d["predicate"]),
                   bool(d["expected"]), bool(d["observed"]), d.get("rule"))


def _lookup(state: Mapping[Atom, bool], atom: Atom, rules: RuleSet) -> tuple[bool | None, str]:
    """Value of ``atom`` with the evidence behind it, or ``(None, reason)``."""
    if atom in state:
        return state[atom], "grounded"
    clo = rules.closure(state)
    if clo.conflicted(atom):
        return None, "rule-conflict"
    val = clo.value(atom)
    if val is None:
        return None, "uncovered"
    return val, f"entailed:{clo.support[(atom, val)]}"


def check_pre(h: Hypothesis, grounded: Mapping[Atom, bool], rules: RuleSet) -> Verdict:
    """Precondition coverage from grounded facts and entailment only.

    Every precondition gets an audit entry; failures do not stop the scan.
    """
    entries = []
    for atom, want in h.expected:
        val, source = _lookup(grounded, atom, rules)
        if val is None:
            entries.append(AuditEntry("pre", str(atom), "fail", source))
        elif val == want:
            entries.append(AuditEntry("pre", str(atom), "pass", source))
        else:
            entries.append(AuditEntry("pre", str(atom), "fail", source + "-opposite"))
    return Verdict(all(e.passed for e in entries), tuple(entries))


def pullback_verify(h: Hypothesis, grounded: Mapping[Atom, bool], goal: GoalConstraints,
                    schema: DomainSchema) -> Verdict:
    """Stepwise compatibility of the plan, then the goal on the final state.

    Stops at the first failing step.
    """
    rules = schema.rule_set
    state = {a: grounded[a] for a in grounded}
    entries = []
    for i, action in enumerate(h.plan):
        for atom, want in action.preconditions:
            val, source = _lookup(state, atom, rules)
            if val != want:
                why = source if val is None else source + "-opposite"
                entries.append(AuditEntry("step", f"{i}:{action}", "fail", f"{atom} {why}"))
                return Verdict(False, tuple(entries))
        entries.append(AuditEntry("step", f"{i}:{action}", "pass", "compatible"))
        for atom, v in action.effects():
            state[atom] = v
    for atom, want in goal:
        val, source = _lookup(state, atom, rules)
        if val != want:
            why = source if val is None else source + "-opposite"
            entries.append(AuditEntry("goal", str(atom), "fail", why))
            return Verdict(False, tuple(entries))
        entries.append(AuditEntry("goal", str(atom), "pass", source))
    return Verdict(True, tuple(entries))


def verify(h: Hypothesis, grounded: GroundedStore, goal: GoalConstraints,
           schema: DomainSchema) -> Verdict:
    """``check_pre`` and then ``pullback_verify``; short-circuits on failure."""
    pre = check_pre(h, grounded, schema.rule_set)
    if not pre.passed:
        return pre
    pull = pullback_verify(h, grounded, goal, schema)
    return Verdict(pull.passed, pre.audit + pull.audit)


def brute_force_feasible(h: Hypothesis, hidden: Mapping[Atom, bool] | object,
                         schema: DomainSchema, goal: GoalConstraints) -> bool:
    """Run the plan against the complete hidden truth.

    True iff every action's preconditions hold when it runs and the goal holds
    afterwards. ``hidden`` is a total truth mapping or anything with a
    ``truth`` mapping attribute.
    """
    truth = getattr(hidden, "truth", hidden)
    state = dict(truth)
    for action in h.plan:
        if any(state.get(a) != v for a, v in action.preconditions):
            return False
        for a, v in action.effects():
            state[a] = v
    return all(state.get(a) == v for a, v in goal)


_OVERRIDE_PROVENANCE = {
    CounterexampleKind.GROUNDING_CONFLICT: Provenance.QUERY,
    CounterexampleKind.EXECUTION_CONTRADICTION: Provenance.FEEDBACK,
}


def repair(counterexamples: Iterable[Counterexample], schema: DomainSchema,
           grounded: GroundedStore, *, threshold: int = 2) -> tuple[DomainSchema, GroundedStore]:
    """Evidence override and rule tightening.

    Grounded facts contradicted by newer query or execution evidence take the
    observed value. Any enabled rule implicated in at least ``threshold``
    entailment contradictions is disabled.
    """
    counterexamples = list(counterexamples)
    blame = Counter(c.rule_id for c in counterexamples
                    if c.kind is CounterexampleKind.ENTAILMENT_CONTRADICTION and c.rule_id)
    enabled = {r.id for r in schema.rules if r.enabled}
    drop = sorted(r for r, n in blame.items() if n >= threshold and r in enabled)
    if drop:
        schema = schema.with_rules(disable=drop)
    overrides = [GroundedFact(c.predicate, c.observed, _OVERRIDE_PROVENANCE[c.kind])
                 for c in counterexamples if c.kind in _OVERRIDE_PROVENANCE]
    if overrides:
        grounded = grounded.updated(overrides)
    return schema, grounded
