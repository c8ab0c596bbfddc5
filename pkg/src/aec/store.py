"""Grounded fact store, belief store and the epistemic state triple.

The grounded store ``w`` holds predicate assignments backed by external
evidence; the belief store holds model predictions with an uncertainty.
The two domains are kept disjoint: grounding a predicate evicts any belief
about it, and inserting a belief for a grounded predicate is an error.

Stores are immutable value objects. Every update returns a new store, which
keeps trace snapshots cheap to reason about.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple

if TYPE_CHECKING:
    from .hypotheses import Hypothesis


class Atom(NamedTuple):
    """A ground predicate such as ``in(apple, fridge)``.

    Equality is structural, so two atoms with the same name and arguments are
    the same predicate.
    """

    name: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    @classmethod
    def parse(cls, text: str) -> Atom:
        m = _ATOM_RE.fullmatch(text.strip())
        if m is None:
            raise ValueError(f"malformed atom: {text!r}")
        args = tuple(a.strip() for a in m.group(2).split(",") if a.strip())
        return cls(m.group(1), args)


_ATOM_RE = re.compile(r"([A-Za-z_][\w\-]*)\(([^()]*)\)")


class Provenance(str, Enum):
    INITIAL = "initial"
    QUERY = "query"
    FEEDBACK = "feedback"
    SIDE_EFFECT = "side_effect"


class GroundedFact(NamedTuple):
    atom: Atom
    value: bool
    provenance: Provenance = Provenance.INITIAL


class GroundingConflict(Exception):
    """A query contradicts an earlier query result and override is disabled."""

    def __init__(self, atom: Atom, old: bool, new: bool):
        super().__init__(f"{atom} grounded as {int(old)} by query, now observed {int(new)}")
        self.atom = atom
        self.old = old
        self.new = new


class DisjointnessError(Exception):
    """A belief was inserted for a predicate that is already grounded."""


class GroundedStore(Mapping[Atom, bool]):
    """The grounded store ``w``: at most one fact per atom.

    Atoms outside :attr:`domain` are unknown. They are never treated as false.
    Equality and hashing consider only the (atom, value) pairs; provenance is
    bookkeeping.
    """

    __slots__ = ("_facts", "_hash")

    def __init__(self, facts: Iterable[GroundedFact] = ()):
        table: dict[Atom, GroundedFact] = {}
        for f in facts:
            table[f.atom] = GroundedFact(f.atom, bool(f.value), Provenance(f.provenance))
        self._facts = table
        self._hash: int | None = None

    @classmethod
    def from_values(cls, values: Mapping[Atom, bool],
                    provenance: Provenance = Provenance.INITIAL) -> GroundedStore:
        return cls(GroundedFact(a, v, provenance) for a, v in values.items())

    def __getitem__(self, atom: Atom) -> bool:
        return self._facts[atom].value

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._facts)

    def __len__(self) -> int:
        return len(self._facts)

    def __contains__(self, atom: object) -> bool:
        return atom in self._facts

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GroundedStore):
            return self.items_frozen() == other.items_frozen()
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.items_frozen())
        return self._hash

    def __repr__(self) -> str:
        return f"GroundedStore({len(self)} facts)"

    @property
    def domain(self) -> frozenset[Atom]:
        return frozenset(self._facts)

    def items_frozen(self) -> frozenset[tuple[Atom, bool]]:
        return frozenset((a, f.value) for a, f in self._facts.items())

    def fact(self, atom: Atom) -> GroundedFact:
        return self._facts[atom]

    def facts(self) -> list[GroundedFact]:
        return [self._facts[a] for a in sorted(self._facts, key=str)]

    def provenance(self, atom: Atom) -> Provenance:
        return self._facts[atom].provenance

    def updated(self, facts: Iterable[GroundedFact]) -> GroundedStore:
        """Return a copy with ``facts`` written over existing entries."""
        new = GroundedStore.__new__(GroundedStore)
        table = dict(self._facts)
        for f in facts:
            table[f.atom] = GroundedFact(f.atom, bool(f.value), Provenance(f.provenance))
        new._facts = table
        new._hash = None
        return new

    def dumps(self) -> str:
        """Serialize to the line format ``name(args)=0|1 @provenance``."""
        return "".join(format_fact(f) + "\n" for f in self.facts())

    @classmethod
    def loads(cls, text: str) -> GroundedStore:
        facts = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                facts.append(parse_fact(line))
        return cls(facts)


def format_fact(fact: GroundedFact) -> str:
    return f"{fact.atom}={int(fact.value)} @{fact.provenance.value}"


def parse_fact(line: str) -> GroundedFact:
    m = re.fullmatch(r"(.+\))\s*=\s*([01])\s*(?:@(\w+))?", line.strip())
    if m is None:
        raise ValueError(f"malformed fact line: {line!r}")
    prov = Provenance(m.group(3)) if m.group(3) else Provenance.INITIAL
    return GroundedFact(Atom.parse(m.group(1)), m.group(2) == "1", prov)


def ground_update(store: GroundedStore, p: Atom, v: bool,
                  delta: Iterable[GroundedFact] = (), *,
                  allow_override: bool = True) -> GroundedStore:
    """Apply ``w <- w ∪ {(p, v)} ∪ Δw`` after a query.

    ``p`` is recorded with query provenance and every side-effect fact with
    side-effect provenance. Side-effect facts describe the world after the
    query (which may have changed it) and replace older entries.

    Raises
    ------
    GroundingConflict
        If ``p`` already holds the opposite value from an earlier query and
        ``allow_override`` is false.
    """
    if p in store:
        old = store.fact(p)
        if old.value != v and old.provenance is Provenance.QUERY and not allow_override:
            raise GroundingConflict(p, old.value, v)
    facts = [GroundedFact(f.atom, f.value, Provenance.SIDE_EFFECT)
             for f in delta if f.atom != p]
    facts.append(GroundedFact(p, v, Provenance.QUERY))
    return store.updated(facts)


class Belief(NamedTuple):
    atom: Atom
    value: bool
    uncertainty: float


class BeliefStore(Mapping[Atom, Belief]):
    """The belief store ``ŵ`` of (predicate, discretized value, σ) tuples."""

    __slots__ = ("_beliefs",)

    def __init__(self, beliefs: Iterable[Belief] = ()):
        self._beliefs: dict[Atom, Belief] = {}
        for b in beliefs:
            _check_sigma(b.uncertainty)
            self._beliefs[b.atom] = b

    def __getitem__(self, atom: Atom) -> Belief:
        return self._beliefs[atom]

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._beliefs)

    def __len__(self) -> int:
        return len(self._beliefs)

    def __contains__(self, atom: object) -> bool:
        return atom in self._beliefs

    def __eq__(self, other: object) -> bool:
        if isinstance(other, BeliefStore):
            return self._beliefs == other._beliefs
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"BeliefStore({len(self)} beliefs)"

    @property
    def domain(self) -> frozenset[Atom]:
        return frozenset(self._beliefs)

    def without(self, atoms: Iterable[Atom]) -> BeliefStore:
        drop = set(atoms)
        if not drop & self._beliefs.keys():
            return self
        return BeliefStore(b for a, b in self._beliefs.items() if a not in drop)


def _check_sigma(sigma: float) -> None:
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"uncertainty must lie in [0, 1], got {sigma}")


def insert_belief(store: BeliefStore, p: Atom, v_hat: bool, sigma: float, *,
                  grounded: Mapping[Atom, bool] | None = None) -> BeliefStore:
    """Record a simulated value for ``p``; a later prediction overwrites it."""
    if grounded is not None and p in grounded:
        raise DisjointnessError(f"{p} is grounded; it cannot also be a belief")
    _check_sigma(sigma)
    table = dict(store._beliefs)
    table[p] = Belief(p, bool(v_hat), float(sigma))
    out = BeliefStore.__new__(BeliefStore)
    out._beliefs = table
    return out


def unresolved_set(grounded: Mapping[Atom, bool], beliefs: Mapping[Atom, object],
                   h: Hypothesis) -> frozenset[Atom]:
    """Preconditions of ``h`` that are neither grounded nor believed."""
    return frozenset(p for p in h.preconditions
                     if p not in grounded and p not in beliefs)


@dataclass(frozen=True)
class EpistemicState:
    """The triple (w, ŵ, H)."""

    grounded: GroundedStore = field(default_factory=GroundedStore)
    beliefs: BeliefStore = field(default_factory=BeliefStore)
    hypotheses: tuple[Hypothesis, ...] = ()

    def __post_init__(self):
        overlap = self.grounded.domain & self.beliefs.domain
        if overlap:
            raise DisjointnessError(
                "grounded and belief domains overlap: "
                + ", ".join(sorted(map(str, overlap))))


def union_unresolved(state: EpistemicState) -> frozenset[Atom]:
    out: set[Atom] = set()
    for h in state.hypotheses:
        out |= unresolved_set(state.grounded, state.beliefs, h)
    return frozenset(out)
