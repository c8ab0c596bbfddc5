"""Symbolic planning domain: typed predicates, STRIPS actions, entailment.

A :class:`DomainSchema` is loaded from a small line-oriented text format::

    domain micro
    type item
    type receptacle
    type fridge : receptacle
    object o1 o2 : item
    predicate in(item, receptacle)
    predicate handempty()
    focus item
    action take(?o: item, ?r: receptacle)
      pre: in(?o, ?r) open(?r) handempty()
      add: holding(?o)
      del: in(?o, ?r) handempty()
    rule excl: in(?x, ?r) => !in(?x, ?s) where ?r != ?s
    rule closed_empty disabled: !open(?r) => !in(?x, ?r)
    constraint exactly_one(?o: item): in(?o, ?r) | holding(?o)
    constraint implies(?o: item, ?f: fridge): in(?o, ?f) -> cold(?o)

``!`` (or ``not``) negates a literal. Variable types are inferred from the
predicate declarations and may be narrowed with ``?v: type`` either inline
or in a ``where`` clause. ``#`` starts a comment. Continuation lines of an
``action`` block are indented.

Entailment is forward chaining over guarded Horn rules, applied in rule-id
order until fixpoint. It never overrides a grounded value, so it can only
abstain or agree on grounded atoms.
"""

from __future__ import annotations

import itertools
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

from .store import Atom, GroundedFact, GroundedStore, Provenance

__all__ = [
    "ActionTemplate", "Closure", "DomainSchema", "EntailmentRule", "ExactlyOne",
    "GoalConstraints", "GroundAction", "Implies", "LiteralPattern", "RuleConflict",
    "RuleSet", "SchemaError", "apply_plan", "entails", "goal_satisfied",
    "load_schema", "parse_schema", "plan_requirements",
]


class SchemaError(ValueError):
    pass


class RuleConflict(Exception):
    """Two enabled rules derive opposite values for the same atom."""

    def __init__(self, atom: Atom, rules: Sequence[str]):
        super().__init__(f"rules {', '.join(rules)} disagree on {atom}")
        self.atom = atom
        self.rules = tuple(rules)


class LiteralPattern(NamedTuple):
    name: str
    args: tuple[str, ...]
    value: bool = True

    def __str__(self) -> str:
        return ("" if self.value else "!") + f"{self.name}({', '.join(self.args)})"

    def bind(self, b: Mapping[str, str]) -> Atom:
        return Atom(self.name, tuple(b.get(a, a) for a in self.args))


def _is_var(term: str) -> bool:
    return term.startswith("?")


# --------------------------------------------------------------------------
# Actions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionTemplate:
    name: str
    params: tuple[tuple[str, str], ...]
    preconditions: tuple[LiteralPattern, ...] = ()
    add_effects: tuple[LiteralPattern, ...] = ()
    delete_effects: tuple[LiteralPattern, ...] = ()
    distinct: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True, eq=False)
class GroundAction:
    """An action template with every parameter bound to an object."""

    template: ActionTemplate
    args: tuple[str, ...]

    def __post_init__(self):
        if len(self.args) != len(self.template.params):
            raise SchemaError(f"{self.template.name} expects {len(self.template.params)} args")
        if set(self.add_effects) & set(self.delete_effects):
            raise SchemaError(f"{self}: add and delete effects overlap")

    @property
    def name(self) -> str:
        return self.template.name

    @cached_property
    def bindings(self) -> dict[str, str]:
        return {v: a for (v, _), a in zip(self.template.params, self.args)}

    @cached_property
    def preconditions(self) -> tuple[tuple[Atom, bool], ...]:
        return tuple((p.bind(self.bindings), p.value) for p in self.template.preconditions)

    @cached_property
    def add_effects(self) -> tuple[Atom, ...]:
        return tuple(p.bind(self.bindings) for p in self.template.add_effects)

    @cached_property
    def delete_effects(self) -> tuple[Atom, ...]:
        return tuple(p.bind(self.bindings) for p in self.template.delete_effects)

    def effects(self) -> list[tuple[Atom, bool]]:
        return [(a, False) for a in self.delete_effects] + [(a, True) for a in self.add_effects]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GroundAction):
            return self.template.name == other.template.name and self.args == other.args
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.template.name, self.args))

    def __str__(self) -> str:
        return f"{self.template.name}({','.join(self.args)})"

    __repr__ = __str__


# --------------------------------------------------------------------------
# Rules and constraints
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EntailmentRule:
    id: str
    premises: tuple[LiteralPattern, ...]
    conclusion: LiteralPattern
    var_types: tuple[tuple[str, str], ...] = ()
    distinct: tuple[tuple[str, str], ...] = ()
    enabled: bool = True

    def __post_init__(self):
        if not self.premises:
            raise SchemaError(f"rule {self.id} has no premises")
        if self.conclusion in self.premises:
            raise SchemaError(f"rule {self.id} concludes one of its premises")

    def __str__(self) -> str:
        body = ", ".join(map(str, self.premises))
        return f"{self.id}: {body} => {self.conclusion}"


@dataclass(frozen=True)
class ExactlyOne:
    """Exactly one member atom is true in any consistent world."""

    members: tuple[Atom, ...]


@dataclass(frozen=True)
class Implies:
    premise: tuple[Atom, bool]
    conclusion: tuple[Atom, bool]


@dataclass(frozen=True)
class _ConstraintTemplate:
    kind: str
    header: tuple[tuple[str, str], ...]
    literals: tuple[LiteralPattern, ...]
    var_types: tuple[tuple[str, str], ...]


# --------------------------------------------------------------------------
# Goals
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GoalConstraints:
    """Required literals ``w*``; kept sorted so equal goals compare equal."""

    required: tuple[tuple[Atom, bool], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "required",
                           tuple(sorted(set(self.required), key=lambda lv: (str(lv[0]), lv[1]))))

    def __iter__(self):
        return iter(self.required)

    def __len__(self) -> int:
        return len(self.required)

    def __str__(self) -> str:
        return " ".join(("" if v else "!") + str(a) for a, v in self.required)

    @property
    def objects(self) -> frozenset[str]:
        return frozenset(x for a, _ in self.required for x in a.args)

    @classmethod
    def parse(cls, text: str) -> GoalConstraints:
        lits = []
        for neg, name, args in _LIT_RE.findall(text):
            lits.append((Atom(name, tuple(_split_args(args))), not neg))
        return cls(tuple(lits))


# --------------------------------------------------------------------------
# Schema
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DomainSchema:
    """Typed predicate inventory, objects, action templates, rules, constraints.

    Immutable once built; compare by identity.
    """

    name: str
    types: Mapping[str, str | None]
    objects: Mapping[str, str]
    predicates: Mapping[str, tuple[str, ...]]
    actions: Mapping[str, ActionTemplate]
    rules: tuple[EntailmentRule, ...] = ()
    constraint_templates: tuple[_ConstraintTemplate, ...] = ()
    focus_types: frozenset[str] = frozenset()
    source: str = field(default="", repr=False)

    def is_subtype(self, t: str, parent: str) -> bool:
        while t is not None:
            if t == parent:
                return True
            t = self.types.get(t)
        return False

    def object_is(self, obj: str, t: str) -> bool:
        ot = self.objects.get(obj)
        return ot is not None and self.is_subtype(ot, t)

    def objects_of(self, t: str) -> tuple[str, ...]:
        return self._objects_by_type.get(t, ())

    @cached_property
    def _objects_by_type(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {t: [] for t in self.types}
        for o in sorted(self.objects):
            t: str | None = self.objects[o]
            while t is not None:
                out.setdefault(t, []).append(o)
                t = self.types.get(t)
        return {t: tuple(v) for t, v in out.items()}

    def check_atom(self, atom: Atom) -> None:
        sig = self.predicates.get(atom.name)
        if sig is None:
            raise SchemaError(f"undeclared predicate {atom.name}")
        if len(sig) != len(atom.args):
            raise SchemaError(f"{atom}: expected {len(sig)} arguments")
        for arg, t in zip(atom.args, sig):
            if not self.object_is(arg, t):
                raise SchemaError(f"{atom}: {arg!r} is not a {t}")

    @cached_property
    def ground_atoms(self) -> tuple[Atom, ...]:
        out = []
        for name in sorted(self.predicates):
            pools = [self.objects_of(t) for t in self.predicates[name]]
            for args in itertools.product(*pools):
                out.append(Atom(name, args))
        return tuple(out)

    @cached_property
    def ground_actions(self) -> tuple[GroundAction, ...]:
        out = []
        for name in sorted(self.actions):
            tpl = self.actions[name]
            pools = [self.objects_of(t) for _, t in tpl.params]
            for args in itertools.product(*pools):
                b = {v: a for (v, _), a in zip(tpl.params, args)}
                if any(b[x] == b[y] for x, y in tpl.distinct):
                    continue
                out.append(GroundAction(tpl, args))
        return tuple(out)

    def ground(self, name: str, *args: str) -> GroundAction:
        tpl = self.actions.get(name)
        if tpl is None:
            raise SchemaError(f"unknown action {name}")
        for (v, t), a in zip(tpl.params, args):
            if not self.object_is(a, t):
                raise SchemaError(f"{name}: {a!r} is not a {t}")
        b = dict(zip((v for v, _ in tpl.params), args))
        if any(b[x] == b[y] for x, y in tpl.distinct):
            raise SchemaError(f"{name}{args}: distinct parameters bound to the same object")
        return GroundAction(tpl, tuple(args))

    def parse_action(self, text: str) -> GroundAction:
        atom = Atom.parse(text)
        return self.ground(atom.name, *atom.args)

    @cached_property
    def rule_set(self) -> RuleSet:
        return RuleSet(self, tuple(r for r in self.rules if r.enabled))

    def rule(self, rule_id: str) -> EntailmentRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def with_rules(self, enable: Iterable[str] = (), disable: Iterable[str] = ()) -> DomainSchema:
        """Return a copy with the given rule ids switched on or off."""
        enable, disable = set(enable), set(disable)
        known = {r.id for r in self.rules}
        missing = (enable | disable) - known
        if missing:
            raise SchemaError(f"unknown rules: {', '.join(sorted(missing))}")
        rules = tuple(
            replace(r, enabled=(r.id in enable) or (r.enabled and r.id not in disable))
            for r in self.rules)
        return replace(self, rules=rules)

    @property
    def disabled_rules(self) -> frozenset[str]:
        return frozenset(r.id for r in self.rules if not r.enabled)

    @cached_property
    def constraints(self) -> tuple[ExactlyOne | Implies, ...]:
        out: list[ExactlyOne | Implies] = []
        for ct in self.constraint_templates:
            types = dict(ct.var_types)
            hvars = [v for v, _ in ct.header]
            for hargs in itertools.product(*(self.objects_of(t) for _, t in ct.header)):
                hb = dict(zip(hvars, hargs))
                if ct.kind == "exactly_one":
                    members: list[Atom] = []
                    for lit in ct.literals:
                        free = sorted({a for a in lit.args if _is_var(a) and a not in hb})
                        for fargs in itertools.product(*(self.objects_of(types[v]) for v in free)):
                            b = dict(hb, **dict(zip(free, fargs)))
                            members.append(lit.bind(b))
                    out.append(ExactlyOne(tuple(dict.fromkeys(members))))
                else:
                    prem, conc = ct.literals
                    out.append(Implies((prem.bind(hb), prem.value), (conc.bind(hb), conc.value)))
        return tuple(out)

    @cached_property
    def constraint_index(self) -> dict[Atom, tuple[ExactlyOne | Implies, ...]]:
        idx: dict[Atom, list] = {}
        for c in self.constraints:
            atoms = c.members if isinstance(c, ExactlyOne) else (c.premise[0], c.conclusion[0])
            for a in atoms:
                idx.setdefault(a, []).append(c)
        return {a: tuple(cs) for a, cs in idx.items()}

    def consistent(self, values: Mapping[Atom, bool],
                   focus: Iterable[Atom] | None = None) -> bool:
        """Check the schema constraints on a partial assignment.

        Unknown atoms are free. With ``focus`` given, only constraints that
        mention one of those atoms are checked.
        """
        if focus is None:
            cs: Iterable = self.constraints
        else:
            seen: dict[int, ExactlyOne | Implies] = {}
            for a in focus:
                for c in self.constraint_index.get(a, ()):
                    seen[id(c)] = c
            cs = seen.values()
        for c in cs:
            if isinstance(c, ExactlyOne):
                n_true = 0
                n_false = 0
                for a in c.members:
                    v = values.get(a)
                    if v is True:
                        n_true += 1
                    elif v is False:
                        n_false += 1
                if n_true > 1 or n_false == len(c.members):
                    return False
            else:
                pa, pv = c.premise
                ca, cv = c.conclusion
                if values.get(pa) is pv and values.get(ca) is (not cv):
                    return False
        return True


# --------------------------------------------------------------------------
# Entailment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Closure:
    """Result of forward chaining from a set of grounded values."""

    grounded: Mapping[Atom, bool]
    derived: Mapping[Atom, frozenset[bool]]
    support: Mapping[tuple[Atom, bool], str]
    contradictions: tuple[tuple[str, Atom, bool], ...]

    def derives(self, atom: Atom, value: bool) -> bool:
        return value in self.derived.get(atom, ())

    def conflicted(self, atom: Atom) -> bool:
        return len(self.derived.get(atom, ())) == 2

    def value(self, atom: Atom) -> bool | None:
        """Grounded value, else the unique derived value, else ``None``."""
        if atom in self.grounded:
            return self.grounded[atom]
        vals = self.derived.get(atom)
        if vals and len(vals) == 1:
            return next(iter(vals))
        return None

    def pairs(self) -> frozenset[tuple[Atom, bool]]:
        return frozenset((a, v) for a, vs in self.derived.items() for v in vs)


class RuleSet:
    """The enabled rules of a schema plus a memoized forward chainer."""

    def __init__(self, schema: DomainSchema, rules: tuple[EntailmentRule, ...]):
        self.schema = schema
        self.rules = tuple(sorted(rules, key=lambda r: r.id))
        self._cache: dict[frozenset, Closure] = {}
        self._types = {r.id: dict(r.var_types) for r in self.rules}

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.rules)

    def __repr__(self) -> str:
        return f"RuleSet({', '.join(self.ids)})"

    def closure(self, facts: Mapping[Atom, bool]) -> Closure:
        key = facts.items_frozen() if isinstance(facts, GroundedStore) else frozenset(facts.items())
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > 200_000:
                self._cache.clear()
            hit = self._cache[key] = self._chain(dict(facts))
        return hit

    def _chain(self, grounded: dict[Atom, bool]) -> Closure:
        index: dict[tuple[str, bool], set[tuple[str, ...]]] = {}
        for a, v in grounded.items():
            index.setdefault((a.name, v), set()).add(a.args)
        derived: dict[Atom, set[bool]] = {}
        support: dict[tuple[Atom, bool], str] = {}
        contradictions: dict[tuple[str, Atom, bool], None] = {}
        changed = True
        while changed:
            changed = False
            for rule in self.rules:
                for atom, val in self._fire(rule, index):
                    g = grounded.get(atom)
                    if g is not None:
                        if g != val:
                            contradictions[(rule.id, atom, val)] = None
                        continue
                    have = derived.setdefault(atom, set())
                    if val not in have:
                        have.add(val)
                        support[(atom, val)] = rule.id
                        index.setdefault((atom.name, val), set()).add(atom.args)
                        changed = True
        return Closure(
            grounded=grounded,
            derived={a: frozenset(v) for a, v in derived.items()},
            support=support,
            contradictions=tuple(contradictions),
        )

    def _fire(self, rule: EntailmentRule, index) -> list[tuple[Atom, bool]]:
        schema = self.schema
        types = self._types[rule.id]
        out = []

        def match(i: int, b: dict[str, str]):
            if i == len(rule.premises):
                yield b
                return
            prem = rule.premises[i]
            for args in tuple(index.get((prem.name, prem.value), ())):
                nb = b
                ok = True
                for pat, arg in zip(prem.args, args):
                    if _is_var(pat):
                        bound = nb.get(pat)
                        if bound is None:
                            if nb is b:
                                nb = dict(b)
                            nb[pat] = arg
                        elif bound != arg:
                            ok = False
                            break
                    elif pat != arg:
                        ok = False
                        break
                if ok:
                    yield from match(i + 1, nb)

        conc = rule.conclusion
        for b in match(0, {}):
            if any(not schema.object_is(o, types[v]) for v, o in b.items() if v in types):
                continue
            free = [a for a in dict.fromkeys(conc.args) if _is_var(a) and a not in b]
            pools = [schema.objects_of(types[v]) for v in free]
            for fargs in itertools.product(*pools):
                full = dict(b, **dict(zip(free, fargs))) if free else b
                if any(full.get(x) == full.get(y) for x, y in rule.distinct):
                    continue
                out.append((conc.bind(full), conc.value))
        return out


def entails(store: Mapping[Atom, bool], p: Atom, rules: RuleSet) -> bool | None:
    """Value of ``p`` forced by ``store`` under ``rules``, or ``None``.

    A grounded value is returned as-is. Raises :class:`RuleConflict` when the
    rules derive both values for an ungrounded ``p``.
    """
    clo = rules.closure(store)
    if p in clo.grounded:
        return clo.grounded[p]
    if clo.conflicted(p):
        raise RuleConflict(p, sorted({clo.support[(p, True)], clo.support[(p, False)]}))
    return clo.value(p)


# --------------------------------------------------------------------------
# Plan semantics
# --------------------------------------------------------------------------

def apply_plan(plan: Sequence[GroundAction], state: Mapping[Atom, bool]) -> GroundedStore:
    """Symbolically execute ``plan``: delete effects go false, adds go true.

    Facts untouched by every action keep their value and provenance. No
    precondition is checked here.
    """
    base = state if isinstance(state, GroundedStore) else GroundedStore.from_values(state)
    effects: dict[Atom, bool] = {}
    for a in plan:
        for atom, v in a.effects():
            effects[atom] = v
    return base.updated(GroundedFact(a, v, Provenance.FEEDBACK) for a, v in effects.items())


def plan_requirements(plan: Sequence[GroundAction],
                      goal: GoalConstraints | None = None) -> dict[Atom, bool]:
    """Literals the plan needs from its starting state.

    A precondition (or goal literal) counts unless an earlier action in the
    plan already set that atom.
    """
    established: dict[Atom, bool] = {}
    needed: dict[Atom, bool] = {}
    for a in plan:
        for atom, v in a.preconditions:
            if atom not in established and atom not in needed:
                needed[atom] = v
        for atom, v in a.effects():
            established[atom] = v
    if goal is not None:
        for atom, v in goal:
            if atom not in established and atom not in needed:
                needed[atom] = v
    return needed


def goal_satisfied(state: Mapping[Atom, bool], goal: GoalConstraints,
                   rules: RuleSet | None = None) -> bool:
    """Every goal literal is grounded with its value or entailed with it."""
    clo = None
    for atom, v in goal:
        if atom in state:
            if state[atom] != v:
                return False
            continue
        if rules is None:
            return False
        if clo is None:
            clo = rules.closure(state)
        vals = clo.derived.get(atom, frozenset())
        if vals != {v}:
            return False
    return True


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

_LIT_RE = re.compile(r"(!|\bnot\s+)?\s*([A-Za-z_][\w\-]*)\(([^()]*)\)")


def _split_args(text: str) -> list[str]:
    return [a.strip() for a in text.split(",") if a.strip()]


def _parse_literals(text: str) -> tuple[list[LiteralPattern], dict[str, str]]:
    """Parse literals; inline ``?v: type`` annotations are returned separately."""
    lits = []
    annotations: dict[str, str] = {}
    for neg, name, args in _LIT_RE.findall(text):
        terms = []
        for arg in _split_args(args):
            if ":" in arg:
                var, t = (s.strip() for s in arg.split(":", 1))
                annotations[var] = t
                arg = var
            terms.append(arg)
        lits.append(LiteralPattern(name, tuple(terms), not neg))
    leftover = _LIT_RE.sub("", text).replace(",", " ").replace("|", " ").strip()
    if leftover:
        raise SchemaError(f"unparsed text {leftover!r} in {text!r}")
    return lits, annotations


def _parse_where(text: str) -> tuple[dict[str, str], list[tuple[str, str]]]:
    types: dict[str, str] = {}
    distinct: list[tuple[str, str]] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if "!=" in part:
            x, y = (s.strip() for s in part.split("!=", 1))
            distinct.append((x, y))
        elif ":" in part:
            v, t = (s.strip() for s in part.split(":", 1))
            types[v] = t
        else:
            raise SchemaError(f"bad guard {part!r}")
    return types, distinct


class _Builder:
    def __init__(self):
        self.name = "domain"
        self.types: dict[str, str | None] = {}
        self.objects: dict[str, str] = {}
        self.predicates: dict[str, tuple[str, ...]] = {}
        self.actions: dict[str, ActionTemplate] = {}
        self.rules: list[EntailmentRule] = []
        self.constraints: list[_ConstraintTemplate] = []
        self.focus: set[str] = set()

    def _sub(self, t: str, parent: str) -> bool:
        while t is not None:
            if t == parent:
                return True
            t = self.types.get(t)
        return False

    def infer_types(self, lits: Iterable[LiteralPattern],
                    declared: Mapping[str, str]) -> dict[str, str]:
        types = dict(declared)
        for lit in lits:
            sig = self.predicates.get(lit.name)
            if sig is None:
                raise SchemaError(f"undeclared predicate {lit.name}")
            if len(sig) != len(lit.args):
                raise SchemaError(f"{lit}: expected {len(sig)} arguments")
            for arg, t in zip(lit.args, sig):
                if not _is_var(arg):
                    continue
                old = types.get(arg)
                if old is None or self._sub(t, old):
                    types[arg] = t
                elif not self._sub(old, t):
                    raise SchemaError(f"{arg} used as both {old} and {t}")
        for t in types.values():
            if t not in self.types:
                raise SchemaError(f"undeclared type {t}")
        return types

    def build(self, source: str) -> DomainSchema:
        for r in self.rules:
            for lit in (*r.premises, r.conclusion):
                if lit.name not in self.predicates:
                    raise SchemaError(f"rule {r.id}: undeclared predicate {lit.name}")
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise SchemaError("duplicate rule ids")
        return DomainSchema(
            name=self.name, types=self.types, objects=self.objects,
            predicates=self.predicates, actions=self.actions,
            rules=tuple(self.rules), constraint_templates=tuple(self.constraints),
            focus_types=frozenset(self.focus), source=source)


def parse_schema(text: str) -> DomainSchema:
    """Parse the declarative domain format described in the module docstring."""
    b = _Builder()
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i].split("#", 1)[0].rstrip()
        i += 1
        if not raw.strip():
            continue
        keyword, _, rest = raw.strip().partition(" ")
        rest = rest.strip()
        try:
            if keyword == "domain":
                b.name = rest
            elif keyword == "type":
                name, _, parent = (s.strip() for s in rest.partition(":"))
                if name in b.types:
                    raise SchemaError(f"type {name} declared twice")
                if parent and parent not in b.types:
                    raise SchemaError(f"unknown parent type {parent}")
                b.types[name] = parent or None
            elif keyword == "object":
                names, _, t = rest.partition(":")
                t = t.strip()
                if t not in b.types:
                    raise SchemaError(f"unknown type {t}")
                for o in names.split():
                    if o in b.objects:
                        raise SchemaError(f"object {o} declared twice")
                    b.objects[o] = t
            elif keyword == "predicate":
                m = re.fullmatch(r"([A-Za-z_][\w\-]*)\(([^()]*)\)", rest)
                if m is None:
                    raise SchemaError(f"bad predicate declaration {rest!r}")
                if m.group(1) in b.predicates:
                    raise SchemaError(f"predicate {m.group(1)} declared twice")
                sig = tuple(_split_args(m.group(2)))
                for t in sig:
                    if t not in b.types:
                        raise SchemaError(f"unknown type {t}")
                b.predicates[m.group(1)] = sig
            elif keyword == "focus":
                b.focus.update(rest.split())
            elif keyword == "action":
                body = []
                while i < len(lines) and lines[i][:1] in (" ", "\t") and lines[i].strip():
                    body.append(lines[i].split("#", 1)[0].strip())
                    i += 1
                _parse_action(b, rest, body)
            elif keyword == "rule":
                _parse_rule(b, rest)
            elif keyword == "constraint":
                _parse_constraint(b, rest)
            else:
                raise SchemaError(f"unknown keyword {keyword!r}")
        except SchemaError as e:
            raise SchemaError(f"line {i}: {e}") from None
    return b.build(text)


def _parse_action(b: _Builder, head: str, body: list[str]) -> None:
    m = re.fullmatch(r"([A-Za-z_][\w\-]*)\((.*)\)", head)
    if m is None:
        raise SchemaError(f"bad action header {head!r}")
    params = []
    for p in _split_args(m.group(2)):
        v, _, t = (s.strip() for s in p.partition(":"))
        if not _is_var(v) or t not in b.types:
            raise SchemaError(f"bad parameter {p!r}")
        params.append((v, t))
    fields: dict[str, list[LiteralPattern]] = {"pre": [], "add": [], "del": []}
    distinct: list[tuple[str, str]] = []
    for line in body:
        key, _, val = line.partition(":")
        key = key.strip()
        if key == "where":
            _, distinct = _parse_where(val)
        elif key in fields:
            lits, ann = _parse_literals(val)
            if ann:
                raise SchemaError("type annotations belong in the action header")
            fields[key].extend(lits)
        else:
            raise SchemaError(f"unknown action field {key!r}")
    pvars = {v for v, _ in params}
    for lit in fields["pre"] + fields["add"] + fields["del"]:
        for a in lit.args:
            if _is_var(a) and a not in pvars:
                raise SchemaError(f"{m.group(1)}: unbound variable {a}")
    declared = dict(params)
    inferred = b.infer_types(fields["pre"] + fields["add"] + fields["del"], declared)
    for v, t in params:
        if not b._sub(t, inferred[v]) and inferred[v] != t:
            raise SchemaError(f"{m.group(1)}: {v}: {t} conflicts with use as {inferred[v]}")
    for lit in fields["add"] + fields["del"]:
        if not lit.value:
            raise SchemaError("effects are written as positive atoms")
    b.actions[m.group(1)] = ActionTemplate(
        name=m.group(1), params=tuple(params), preconditions=tuple(fields["pre"]),
        add_effects=tuple(fields["add"]), delete_effects=tuple(fields["del"]),
        distinct=tuple(distinct))


def _parse_rule(b: _Builder, text: str) -> None:
    head, _, body = text.partition(":")
    words = head.split()
    if not words:
        raise SchemaError("rule needs an id")
    rid, flags = words[0], set(words[1:])
    if flags - {"disabled", "enabled"}:
        raise SchemaError(f"unknown rule flags {flags}")
    body, _, where = body.partition(" where ")
    lhs, arrow, rhs = body.partition("=>")
    if not arrow:
        raise SchemaError("rule needs '=>'")
    premises, ann1 = _parse_literals(lhs)
    conclusion, ann2 = _parse_literals(rhs)
    if len(conclusion) != 1:
        raise SchemaError("rule needs exactly one conclusion")
    wtypes, distinct = _parse_where(where)
    declared = {**ann1, **ann2, **wtypes}
    types = b.infer_types(premises + conclusion, declared)
    b.rules.append(EntailmentRule(
        id=rid, premises=tuple(premises), conclusion=conclusion[0],
        var_types=tuple(sorted(types.items())), distinct=tuple(distinct),
        enabled="disabled" not in flags))


def _parse_constraint(b: _Builder, text: str) -> None:
    m = re.fullmatch(r"(exactly_one|implies)\(([^()]*)\)\s*:(.*)", text)
    if m is None:
        raise SchemaError(f"bad constraint {text!r}")
    kind = m.group(1)
    header = []
    for p in _split_args(m.group(2)):
        v, _, t = (s.strip() for s in p.partition(":"))
        if t not in b.types:
            raise SchemaError(f"bad constraint parameter {p!r}")
        header.append((v, t))
    if kind == "implies":
        lhs, arrow, rhs = m.group(3).partition("->")
        if not arrow:
            raise SchemaError("implies needs '->'")
        l1, a1 = _parse_literals(lhs)
        l2, a2 = _parse_literals(rhs)
        if len(l1) != 1 or len(l2) != 1:
            raise SchemaError("implies takes one literal on each side")
        lits, ann = l1 + l2, {**a1, **a2}
        hv = {v for v, _ in header}
        for lit in lits:
            if any(_is_var(a) and a not in hv for a in lit.args):
                raise SchemaError("implies literals may only use header variables")
    else:
        lits, ann = _parse_literals(m.group(3))
        if any(not lit.value for lit in lits):
            raise SchemaError("exactly_one members are positive atoms")
    types = b.infer_types(lits, {**dict(header), **ann})
    b.constraints.append(_ConstraintTemplate(kind, tuple(header), tuple(lits),
                                             tuple(sorted(types.items()))))


def load_schema(path) -> DomainSchema:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())
