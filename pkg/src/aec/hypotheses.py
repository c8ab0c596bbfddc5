"""Candidate plans: generation, precondition annotation, filtering and scoring.

The generator is symbolic. It picks a bounded set of unknown predicates
relevant to the goal, enumerates their truth assignments (dropping those
that violate schema constraints), and runs a breadth-first planner under
each assignment. ``Pre(h)`` is the set of literals the plan needs from its
starting state, plus assumed literals that share an exactly-one group with
an assumption the plan relies on. Those siblings make competing hypotheses
distinguishable by querying either side of the group.
"""

from __future__ import annotations

import itertools
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property, lru_cache

from .domain import (DomainSchema, ExactlyOne, GoalConstraints, GroundAction,
                     plan_requirements)
from .store import Atom

__all__ = [
    "Hypothesis", "best_hypothesis", "filter_hypotheses", "generate_hypotheses",
    "relevant_unknowns", "score", "search_plan",
]


@dataclass(frozen=True)
class Hypothesis:
    """A candidate plan with its precondition annotation.

    ``expected`` is kept as sorted (atom, value) pairs so hypotheses hash and
    compare structurally.
    """

    id: str
    plan: tuple[GroundAction, ...]
    expected: tuple[tuple[Atom, bool], ...]
    assumption_count: int = 0

    def __post_init__(self):
        if not self.plan:
            raise ValueError(f"hypothesis {self.id} has an empty plan")
        object.__setattr__(self, "expected",
                           tuple(sorted(self.expected, key=lambda av: str(av[0]))))

    @cached_property
    def expected_map(self) -> dict[Atom, bool]:
        return dict(self.expected)

    @property
    def preconditions(self) -> frozenset[Atom]:
        return frozenset(self.expected_map)

    def expected_value(self, p: Atom) -> bool | None:
        return self.expected_map.get(p)

    @property
    def plan_length(self) -> int:
        return len(self.plan)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "plan": [str(a) for a in self.plan],
            "pre": {str(a): int(v) for a, v in self.expected},
        }


def score(h: Hypothesis) -> float:
    """Higher is better: shorter plans first, then fewer assumptions."""
    return -float(h.plan_length) - 1e-3 * h.assumption_count


def best_hypothesis(hypotheses: Iterable[Hypothesis]) -> Hypothesis | None:
    """``argmax`` of :func:`score`; full ties go to the smallest id."""
    return min(hypotheses, key=lambda h: (h.plan_length, h.assumption_count, h.id),
               default=None)


def filter_hypotheses(hypotheses: Sequence[Hypothesis], p: Atom, v: bool) -> tuple[Hypothesis, ...]:
    """Drop hypotheses that expect the opposite of ``v`` for ``p``.

    Hypotheses that do not mention ``p`` are kept.
    """
    return tuple(h for h in hypotheses if h.expected_map.get(p, v) == v)


def relevant_unknowns(known: Mapping[Atom, bool], goal: GoalConstraints,
                      schema: DomainSchema, limit: int) -> tuple[Atom, ...]:
    """Unknown atoms ranked by how closely they touch the goal's objects."""
    goal_objects = goal.objects
    focus_goal = {o for o in goal_objects
                  if any(schema.object_is(o, t) for t in schema.focus_types)}
    goal_preds = {a.name for a, _ in goal}
    ranked = []
    for atom in schema.ground_atoms:
        if atom in known:
            continue
        shared = len(goal_objects.intersection(atom.args))
        if atom.args and not shared:
            continue
        ranked.append((
            -len(focus_goal.intersection(atom.args)),
            -shared,
            atom.name not in goal_preds,
            str(atom),
            atom,
        ))
    ranked.sort()
    return tuple(r[-1] for r in ranked[:limit])


def _usable_actions(schema: DomainSchema, goal: GoalConstraints) -> tuple[GroundAction, ...]:
    """Ground actions that only touch focus-typed objects named in the goal."""
    allowed = goal.objects
    out = []
    for a in schema.ground_actions:
        if all(o in allowed or not any(schema.object_is(o, t) for t in schema.focus_types)
               for o in a.args):
            out.append(a)
    return tuple(out)


def search_plan(start: Mapping[Atom, bool], goal: GoalConstraints,
                actions: Sequence[GroundAction], max_depth: int) -> tuple[GroundAction, ...] | None:
    """Breadth-first search for a shortest plan reaching ``goal``.

    Unknown atoms (absent from ``start``) never satisfy a precondition or a
    goal literal. Returns ``None`` when nothing is found within ``max_depth``.
    """
    goal_lits = tuple(goal)

    def satisfied(state: dict) -> bool:
        return all(state.get(a) is v for a, v in goal_lits)

    start = dict(start)
    if satisfied(start):
        return ()
    compiled = [(a, a.preconditions, a.effects()) for a in actions]
    root = frozenset(start.items())
    parent: dict[frozenset, tuple[frozenset, GroundAction] | None] = {root: None}
    frontier = deque([(root, start, 0)])
    while frontier:
        key, state, depth = frontier.popleft()
        if depth >= max_depth:
            continue
        for action, pre, eff in compiled:
            if any(state.get(a) is not v for a, v in pre):
                continue
            nxt = dict(state)
            for a, v in eff:
                nxt[a] = v
            nkey = frozenset(nxt.items())
            if nkey in parent:
                continue
            parent[nkey] = (key, action)
            if satisfied(nxt):
                plan = []
                k = nkey
                while parent[k] is not None:
                    k, act = parent[k]
                    plan.append(act)
                return tuple(reversed(plan))
            frontier.append((nkey, nxt, depth + 1))
    return None


def generate_hypotheses(initial: Mapping[Atom, bool], goal: GoalConstraints,
                        schema: DomainSchema, limit: int = 64, *,
                        max_assumptions: int = 6, max_depth: int = 20) -> tuple[Hypothesis, ...]:
    """Return at most ``limit`` hypotheses for reaching ``goal`` from ``initial``.

    Deterministic: the same inputs give the same hypotheses in the same order.
    """
    if limit < 1:
        raise ValueError("limit must be at least 1")
    items = frozenset((a, bool(v)) for a, v in initial.items())
    return _generate(schema, items, goal, limit, max_assumptions, max_depth)


@lru_cache(maxsize=8192)
def _generate(schema: DomainSchema, items: frozenset, goal: GoalConstraints,
              limit: int, max_assumptions: int, max_depth: int) -> tuple[Hypothesis, ...]:
    known = dict(items)
    unknowns = relevant_unknowns(known, goal, schema, max_assumptions)
    actions = _usable_actions(schema, goal)
    groups = [c.members for c in schema.constraints if isinstance(c, ExactlyOne)]

    found: dict[tuple, tuple[tuple[GroundAction, ...], dict[Atom, bool], int]] = {}
    plan_cache: dict[frozenset, tuple | None] = {}
    for values in itertools.product((True, False), repeat=len(unknowns)):
        assumed = dict(zip(unknowns, values))
        world = {**known, **assumed}
        if not schema.consistent(world, focus=unknowns):
            continue
        wkey = frozenset(world.items())
        if wkey not in plan_cache:
            plan_cache[wkey] = search_plan(world, goal, actions, max_depth)
        plan = plan_cache[wkey]
        if not plan:
            continue
        needed = plan_requirements(plan, goal)
        expected = dict(needed)
        relied = [a for a in needed if a in assumed]
        for members in groups:
            if any(a in members for a in relied):
                for m in members:
                    if m in assumed and m not in expected:
                        expected[m] = assumed[m]
        n_assumed = sum(1 for a in expected if a not in known)
        key = (plan, tuple(sorted(expected.items(), key=lambda av: str(av[0]))))
        if key not in found:
            found[key] = (plan, expected, n_assumed)
        if len(found) >= limit:
            break
    return tuple(
        Hypothesis(id=f"h{i:03d}", plan=plan, expected=tuple(expected.items()),
                   assumption_count=n)
        for i, (plan, expected, n) in enumerate(found.values()))
