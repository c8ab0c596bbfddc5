"""Synthetic partially observed household environment.

Two built-in schemas share one set of predicates:

* ``micro``: two objects, a cabinet and a fridge. Its 36 start states are
  enumerated exhaustively.
* ``household``: rooms, cabinets, countertops and fridges with sizes taken
  from :class:`EnvInstanceConfig`.

Observation is sound but partial. Receptacle open states, what the agent
holds, where it is and where receptacles stand are always visible. The
contents of a receptacle are visible only while it is open, and an object's
temperature only while it sits in an open receptacle or in the hand.

A query macro-action reveals one predicate. Asking about an object's
location or temperature opens the relevant receptacle first, a change that
stays in the hidden world, and reveals everything inside as side effects.
"""

from __future__ import annotations

import fnmatch
import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np

from .domain import DomainSchema, GoalConstraints, GroundAction, parse_schema
from .store import Atom, GroundedFact, GroundedStore, Provenance

__all__ = [
    "EnvInstanceConfig", "Environment", "ExecutionResult", "HiddenWorld",
    "OracleConfig", "QueryResult", "SideEffectPolicy", "candidate_goals",
    "enumerate_worlds", "execute_action", "household_schema", "initial_grounding",
    "load_domain", "micro_schema", "micro_worlds", "query", "sample_goal", "sample_world",
    "visible_facts",
]


# --------------------------------------------------------------------------
# Schemas
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def micro_schema() -> DomainSchema:
    text = resources.files("aec.schemas").joinpath("micro.dom").read_text(encoding="utf-8")
    return parse_schema(text)


_HOUSEHOLD_BODY = """
predicate in(item, receptacle)
predicate open(receptacle)
predicate holding(item)
predicate handempty()
predicate cold(item)
predicate at(room)
predicate located(receptacle, room)

focus item

action go(?from: room, ?to: room)
  pre: at(?from)
  add: at(?to)
  del: at(?from)
  where: ?from != ?to

action open(?r: receptacle, ?l: room)
  pre: at(?l) located(?r, ?l)
  add: open(?r)

action take(?o: item, ?r: receptacle, ?l: room)
  pre: in(?o, ?r) open(?r) handempty() at(?l) located(?r, ?l)
  add: holding(?o)
  del: in(?o, ?r) handempty()

action put(?o: item, ?r: shelf, ?l: room)
  pre: holding(?o) open(?r) at(?l) located(?r, ?l)
  add: in(?o, ?r) handempty()
  del: holding(?o)

action put_fridge(?o: item, ?f: fridge, ?l: room)
  pre: holding(?o) open(?f) at(?l) located(?f, ?l)
  add: in(?o, ?f) handempty() cold(?o)
  del: holding(?o)

rule at_unique: at(?l) => !at(?m) where ?l != ?m
rule excl: in(?x, ?r) => !in(?x, ?s) where ?r != ?s
rule fridge_cold: in(?x, ?f: fridge) => cold(?x)
rule held_not_empty: holding(?x) => !handempty()
rule held_not_in: holding(?x) => !in(?x, ?r)
rule in_not_held: in(?x, ?r) => !holding(?x)
rule located_unique: located(?r, ?l) => !located(?r, ?m) where ?l != ?m
rule closed_empty disabled: !open(?r) => !in(?x, ?r)

constraint exactly_one(?o: item): in(?o, ?r) | holding(?o)
constraint exactly_one(): handempty() | holding(?o)
constraint implies(?o: item, ?f: fridge): in(?o, ?f) -> cold(?o)
constraint exactly_one(): at(?l)
constraint exactly_one(?r: receptacle): located(?r, ?l)
"""


@lru_cache(maxsize=64)
def household_schema(rooms: int = 3, cabinets: int = 2, counters: int = 1,
                     fridges: int = 1, objects: int = 3) -> DomainSchema:
    """Build a household schema of the requested size."""
    if min(rooms, objects) < 1 or cabinets + counters + fridges < 1:
        raise ValueError("household needs a room, an object and a receptacle")

    def names(prefix: str, n: int) -> str:
        return " ".join(f"{prefix}{i}" for i in range(1, n + 1))

    head = ["domain household", "type item", "type room", "type receptacle",
            "type shelf : receptacle", "type cabinet : shelf", "type counter : shelf",
            "type fridge : receptacle", f"object {names('o', objects)} : item",
            f"object {names('room', rooms)} : room"]
    for prefix, n, t in (("cab", cabinets, "cabinet"), ("ctr", counters, "counter"),
                         ("fr", fridges, "fridge")):
        if n:
            head.append(f"object {names(prefix, n)} : {t}")
    return parse_schema("\n".join(head) + "\n" + _HOUSEHOLD_BODY)


@dataclass(frozen=True)
class EnvInstanceConfig:
    domain: str = "micro"
    rooms: int = 3
    cabinets: int = 2
    counters: int = 1
    fridges: int = 1
    objects: int = 3
    visibility: str = "rules"
    hide_fraction: float = 0.0
    open_probability: float = 0.3
    cold_probability: float = 0.2
    step_cap: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.domain not in ("micro", "household"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.visibility not in ("rules", "full"):
            raise ValueError(f"unknown visibility {self.visibility!r}")
        for name in ("hide_fraction", "open_probability", "cold_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.step_cap < 1:
            raise ValueError("step_cap must be positive")


def load_domain(config: EnvInstanceConfig) -> DomainSchema:
    if config.domain == "micro":
        return micro_schema()
    return household_schema(config.rooms, config.cabinets, config.counters,
                            config.fridges, config.objects)


# --------------------------------------------------------------------------
# Hidden world
# --------------------------------------------------------------------------

@dataclass
class HiddenWorld:
    """Complete ground truth. Only the environment and the harness read it."""

    schema: DomainSchema
    truth: dict[Atom, bool]
    flips: dict[Atom, bool] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        missing = [a for a in self.schema.ground_atoms if a not in self.truth]
        if missing:
            raise ValueError(f"hidden world is missing {len(missing)} atoms, e.g. {missing[0]}")

    def value(self, atom: Atom) -> bool:
        return self.truth[atom]

    def snapshot(self) -> dict[Atom, bool]:
        return dict(self.truth)

    def dumps(self) -> str:
        """Debug dump in the store line format. Not for the controller."""
        lines = ["# hidden world (debug only)"]
        lines += [f"{a}={int(self.truth[a])}" for a in sorted(self.truth, key=str)]
        return "\n".join(lines) + "\n"


def enumerate_worlds(schema: DomainSchema,
                     fixed: Mapping[Atom, bool] | None = None) -> tuple[dict[Atom, bool], ...]:
    """Every total assignment consistent with the schema constraints.

    ``fixed`` pins atoms to values. Intended for small schemas only.
    """
    fixed = dict(fixed or {})
    free = [a for a in schema.ground_atoms if a not in fixed]
    if len(free) > 20:
        raise ValueError(f"{len(free)} free atoms is too many to enumerate")
    out = []
    for values in itertools.product((False, True), repeat=len(free)):
        truth = {**fixed, **dict(zip(free, values))}
        if schema.consistent(truth):
            out.append(truth)
    return tuple(out)


def _start_fixed(schema: DomainSchema) -> dict[Atom, bool]:
    """Start states have an empty hand."""
    fixed = {Atom("handempty"): True}
    for o in schema.objects_of("item"):
        fixed[Atom("holding", (o,))] = False
    return fixed


@lru_cache(maxsize=None)
def _micro_worlds() -> tuple[dict[Atom, bool], ...]:
    schema = micro_schema()
    return enumerate_worlds(schema, _start_fixed(schema))


def micro_worlds() -> tuple[dict[Atom, bool], ...]:
    """The 36 micro start states, in a fixed order."""
    return tuple(dict(w) for w in _micro_worlds())


def sample_world(config: EnvInstanceConfig, schema: DomainSchema,
                 rng: np.random.Generator | None = None) -> HiddenWorld:
    """Draw a consistent start state. Deterministic given ``rng`` or ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.domain == "micro":
        worlds = _micro_worlds()
        return HiddenWorld(schema, dict(worlds[int(rng.integers(len(worlds)))]))
    truth = {a: False for a in schema.ground_atoms}
    truth[Atom("handempty")] = True
    rooms = schema.objects_of("room")
    truth[Atom("at", (rooms[int(rng.integers(len(rooms)))],))] = True
    receptacles = schema.objects_of("receptacle")
    for r in receptacles:
        truth[Atom("located", (r, rooms[int(rng.integers(len(rooms)))]))] = True
        always_open = schema.object_is(r, "counter")
        truth[Atom("open", (r,))] = always_open or bool(rng.random() < config.open_probability)
    for o in schema.objects_of("item"):
        r = receptacles[int(rng.integers(len(receptacles)))]
        truth[Atom("in", (o, r))] = True
        truth[Atom("cold", (o,))] = (schema.object_is(r, "fridge")
                                     or bool(rng.random() < config.cold_probability))
    world = HiddenWorld(schema, truth)
    if not schema.consistent(world.truth):
        raise ValueError("sampled world violates the schema constraints")
    return world


def candidate_goals(world: HiddenWorld) -> tuple[GoalConstraints, ...]:
    """Single-literal goals that do not already hold in ``world``."""
    schema, truth = world.schema, world.truth
    goals = []
    for o in schema.objects_of("item"):
        if not truth[Atom("holding", (o,))]:
            goals.append(GoalConstraints(((Atom("holding", (o,)), True),)))
        for r in schema.objects_of("receptacle"):
            if not truth[Atom("in", (o, r))]:
                goals.append(GoalConstraints(((Atom("in", (o, r)), True),)))
        if not truth[Atom("cold", (o,))]:
            goals.append(GoalConstraints(((Atom("cold", (o,)), True),)))
    return tuple(goals)


def sample_goal(world: HiddenWorld, rng: np.random.Generator) -> GoalConstraints:
    goals = candidate_goals(world)
    if not goals:
        raise ValueError("every candidate goal already holds")
    return goals[int(rng.integers(len(goals)))]


# --------------------------------------------------------------------------
# Observation
# --------------------------------------------------------------------------

_ALWAYS_VISIBLE = frozenset({"open", "holding", "handempty", "at", "located"})


def _container_of(truth: Mapping[Atom, bool], schema: DomainSchema, obj: str) -> str | None:
    for r in schema.objects_of("receptacle"):
        if truth.get(Atom("in", (obj, r))):
            return r
    return None


def visible_facts(world: HiddenWorld) -> dict[Atom, bool]:
    """What direct observation supports right now."""
    truth, schema = world.truth, world.schema
    out = {}
    for atom, v in truth.items():
        if atom.name in _ALWAYS_VISIBLE:
            out[atom] = v
        elif atom.name == "in":
            if truth[Atom("open", (atom.args[1],))]:
                out[atom] = v
        elif atom.name == "cold":
            o = atom.args[0]
            r = _container_of(truth, schema, o)
            if truth[Atom("holding", (o,))] or (r is not None and truth[Atom("open", (r,))]):
                out[atom] = v
    return out


def initial_grounding(world: HiddenWorld, config: EnvInstanceConfig,
                      rng: np.random.Generator | None = None) -> GroundedStore:
    """The start observation ``w0``: a subset of the hidden truth.

    Under ``visibility="rules"`` each visible fact is further dropped with
    probability ``hide_fraction``.
    """
    if config.visibility == "full":
        facts = dict(world.truth)
    else:
        facts = visible_facts(world)
        if config.hide_fraction > 0:
            if rng is None:
                rng = np.random.default_rng(config.seed)
            keys = sorted(facts, key=str)
            keep = rng.random(len(keys)) >= config.hide_fraction
            facts = {a: facts[a] for a, k in zip(keys, keep) if k}
    return GroundedStore.from_values(facts, Provenance.INITIAL)


# --------------------------------------------------------------------------
# Queries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SideEffectPolicy:
    """Which receptacle a query has to open, per predicate name.

    ``("arg", i)`` opens the receptacle named by argument ``i``;
    ``("container_of", i)`` opens whatever holds the object at argument ``i``.
    """

    opens: tuple[tuple[str, tuple[str, int]], ...] = (
        ("in", ("arg", 1)),
        ("cold", ("container_of", 0)),
    )

    def receptacle_for(self, world: HiddenWorld, p: Atom) -> str | None:
        how = dict(self.opens).get(p.name)
        if how is None:
            return None
        kind, i = how
        if kind == "arg":
            return p.args[i]
        return _container_of(world.truth, world.schema, p.args[i])


@dataclass(frozen=True)
class OracleConfig:
    """Per-predicate query error rates and side-effect behaviour.

    ``error_rates`` maps glob patterns over atom text (``"in(*"``, ``"*"``)
    to flip probabilities; the first matching pattern wins and unmatched
    atoms are error-free.
    """

    error_rates: tuple[tuple[str, float], ...] = ()
    side_effect_errors: bool = False
    persistent: bool = False
    policy: SideEffectPolicy = SideEffectPolicy()

    def __post_init__(self):
        rates = self.error_rates
        if isinstance(rates, Mapping):
            rates = tuple(rates.items())
        rates = tuple((str(p), float(r)) for p, r in rates)
        for p, r in rates:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"error rate for {p!r} must lie in [0, 1]")
        object.__setattr__(self, "error_rates", rates)

    @classmethod
    def uniform(cls, rate: float, **kw) -> OracleConfig:
        return cls(error_rates=(("*", rate),), **kw)

    def rate(self, atom: Atom) -> float:
        return _rate(self.error_rates, str(atom))


@lru_cache(maxsize=65536)
def _rate(rates: tuple[tuple[str, float], ...], text: str) -> float:
    for pattern, r in rates:
        if fnmatch.fnmatchcase(text, pattern):
            return r
    return 0.0


class QueryResult(NamedTuple):
    value: bool
    delta: tuple[GroundedFact, ...]
    steps: int
    flipped: bool


def _steps_to(world: HiddenWorld, receptacle: str | None) -> int:
    if receptacle is None or not world.schema.objects_of("room"):
        return 1
    truth = world.truth
    here = next((r for r in world.schema.objects_of("room") if truth[Atom("at", (r,))]), None)
    there = next((r for r in world.schema.objects_of("room")
                  if truth[Atom("located", (receptacle, r))]), None)
    return 1 if here == there else 2


def query(world: HiddenWorld, p: Atom, oracle: OracleConfig,
          rng: np.random.Generator) -> QueryResult:
    """Ground ``p`` by interacting with the world.

    The returned value is the truth flipped with probability
    ``oracle.rate(p)``. If the policy names a receptacle it is opened (for
    good) and its contents are reported in ``delta``.
    """
    world.schema.check_atom(p)
    receptacle = oracle.policy.receptacle_for(world, p)
    steps = _steps_to(world, receptacle)
    delta: list[GroundedFact] = []
    if receptacle is not None:
        world.truth[Atom("open", (receptacle,))] = True
        seen = visible_facts(world)
        for atom in sorted(seen, key=str):
            if atom == Atom("open", (receptacle,)) or _about(world, atom, receptacle):
                delta.append(GroundedFact(atom, seen[atom], Provenance.SIDE_EFFECT))
    u = rng.random()
    rate = oracle.rate(p)
    if oracle.persistent:
        flipped = world.flips.setdefault(p, bool(u < rate))
    else:
        flipped = bool(u < rate)
    value = world.truth[p] != flipped
    if oracle.side_effect_errors and delta:
        draws = rng.random(len(delta))
        delta = [GroundedFact(f.atom, f.value != bool(d < oracle.rate(f.atom)), f.provenance)
                 for f, d in zip(delta, draws)]
    delta = [f for f in delta if f.atom != p]
    return QueryResult(value, tuple(delta), steps, flipped)


def _about(world: HiddenWorld, atom: Atom, receptacle: str) -> bool:
    """Content facts of ``receptacle``: its ``in`` atoms and its objects' temperature."""
    if atom.name == "in":
        return atom.args[1] == receptacle
    if atom.name == "cold":
        return world.truth.get(Atom("in", (atom.args[0], receptacle)), False)
    return False


# --------------------------------------------------------------------------
# Execution
# --------------------------------------------------------------------------

class ExecutionResult(NamedTuple):
    success: bool
    feedback: tuple[GroundedFact, ...]
    steps: int


def execute_action(world: HiddenWorld, a: GroundAction) -> ExecutionResult:
    """Run ``a`` in the hidden world.

    On success the effects are applied and the feedback holds the effect
    literals plus anything that became observable. On failure the world is
    unchanged and the feedback holds the true values of violated
    preconditions.
    """
    truth = world.truth
    violated = [(atom, truth[atom]) for atom, v in a.preconditions if truth[atom] != v]
    if violated:
        return ExecutionResult(False, tuple(GroundedFact(atom, v, Provenance.FEEDBACK)
                                            for atom, v in violated), 1)
    before = visible_facts(world)
    for atom, v in a.effects():
        truth[atom] = v
    after = visible_facts(world)
    feedback = {atom: v for atom, v in a.effects()}
    for atom, v in after.items():
        if before.get(atom) != v:
            feedback[atom] = v
    return ExecutionResult(True, tuple(GroundedFact(atom, v, Provenance.FEEDBACK)
                                       for atom, v in sorted(feedback.items(), key=lambda x: str(x[0]))), 1)


class Environment:
    """One episode's world as the controller sees it.

    The controller can read the start observation, issue queries, execute
    actions and read the step counter. The hidden world stays behind
    :meth:`hidden_snapshot`, which only the harness calls.
    """

    def __init__(self, world: HiddenWorld, goal: GoalConstraints, config: EnvInstanceConfig,
                 oracle: OracleConfig, rng: np.random.Generator,
                 grounding_rng: np.random.Generator | None = None):
        self._world = world
        self.schema = world.schema
        self.goal = goal
        self.config = config
        self.oracle = oracle
        self._rng = rng
        self.steps = 0
        self.step_cap = config.step_cap
        self._w0 = initial_grounding(world, config, grounding_rng)
        self.query_log: list[QueryResult] = []

    def initial_observation(self) -> GroundedStore:
        return self._w0

    @property
    def exhausted(self) -> bool:
        return self.steps >= self.step_cap

    def query(self, p: Atom) -> QueryResult:
        res = query(self._world, p, self.oracle, self._rng)
        self.steps += res.steps
        self.query_log.append(res)
        return res

    def execute(self, a: GroundAction) -> ExecutionResult:
        res = execute_action(self._world, a)
        self.steps += res.steps
        return res

    def goal_reached(self) -> bool:
        return all(self._world.truth[a] == v for a, v in self.goal)

    def hidden_snapshot(self) -> dict[Atom, bool]:
        return self._world.snapshot()

    def error_rate(self, atom: Atom) -> float:
        return self.oracle.rate(atom)

