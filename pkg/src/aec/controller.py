"""The query-or-simulate control loop, commitment gate and execution monitor.

One planning round works as follows. Hypotheses are generated from the
grounded store. While some hypothesis has an unresolved precondition, the
budget is positive and hypotheses remain, the most discriminating
unresolved predicate is picked and the predictor is asked about it. The
controller queries the environment when the prediction is within ``epsilon``
of 0.5 or its uncertainty exceeds ``tau``; otherwise the discretized value
becomes a belief. Either way hypotheses that expect the other value are
dropped. The best survivor is committed only if the verifier passes it on
grounded facts.

An episode wraps rounds: a rejected round, a failed action, or an observation
that contradicts the rest of the plan starts a new round that keeps the
grounded store and resets beliefs, hypotheses and the query budget.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum

from .domain import DomainSchema, GoalConstraints, goal_satisfied, plan_requirements
from .hypotheses import (Hypothesis, best_hypothesis, filter_hypotheses,
                         generate_hypotheses)
from .predictor import Predictor, is_ambiguous
from .store import (Atom, BeliefStore, EpistemicState, GroundedFact, GroundedStore,
                    GroundingConflict, Provenance, format_fact, ground_update,
                    insert_belief, union_unresolved)
from .verifier import Counterexample, CounterexampleKind, repair, verify

__all__ = [
    "CommitRecord", "ControllerConfig", "EpisodeOutcome", "Mode", "Trace",
    "assert_no_leakage", "commit_gate_violations", "gate_violations",
    "leakage_violations", "run_episode", "select_precondition",
]


class Mode(str, Enum):
    AEC = "AEC"
    DIRECT = "Direct"
    QUERY_ONLY = "QueryOnly"
    NO_VERIFICATION = "NoVerification"
    NO_GATING = "NoGating"

    @property
    def gated(self) -> bool:
        """Whether commitment waits for a passing verdict."""
        return self in (Mode.AEC, Mode.QUERY_ONLY, Mode.NO_GATING)


@dataclass(frozen=True)
class ControllerConfig:
    tau: float = 0.5
    epsilon: float = 0.1
    max_queries: int = 10
    mode: Mode = Mode.AEC
    replan_cap: int = 10
    hypothesis_limit: int = 64
    max_assumptions: int = 6
    max_depth: int = 20
    evidence_override: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in [0, 0.5]")
        if self.max_queries < 0 or self.replan_cap < 0:
            raise ValueError("max_queries and replan_cap must be non-negative")
        if self.hypothesis_limit < 1:
            raise ValueError("hypothesis_limit must be at least 1")

    def gate(self) -> tuple[float, float]:
        """Effective ``(epsilon, tau)``; without gating nothing is ever queried."""
        if self.mode is Mode.NO_GATING:
            return 0.0, math.inf
        return self.epsilon, self.tau


class Trace:
    """Ordered event log. ``i`` is the event index and ``t`` the step counter."""

    def __init__(self, episode: int = 0):
        self.episode = episode
        self.events: list[dict] = []
        self.clock: Callable[[], int] = lambda: 0

    def emit(self, event: str, **fields) -> dict:
        rec = {"episode": self.episode, "i": len(self.events), "t": self.clock(),
               "event": event, **fields}
        self.events.append(rec)
        return rec

    def lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]


@dataclass
class CommitRecord:
    round: int
    hypothesis: Hypothesis
    grounded: GroundedStore
    new_atoms: frozenset[Atom]
    verified: bool
    feasible: bool | None = None
    bound: float | None = None


@dataclass
class EpisodeOutcome:
    success: bool
    replanning_rounds: int
    rounds_used: int
    queries_used: int
    committed_plans: list[str]
    final_state: GroundedStore
    trace: list[dict]
    failure: str | None = None
    steps: int = 0
    commits: list[CommitRecord] = field(default_factory=list)
    counterexamples: list[Counterexample] = field(default_factory=list)
    calibration: list = field(default_factory=list)


def select_precondition(U: Iterable[Atom], H: Sequence[Hypothesis]) -> Atom:
    """The unresolved predicate that splits the most hypothesis pairs.

    Ties go to the predicate mentioned by more hypotheses, then to the
    lexicographically smallest.
    """
    best_key = None
    best = None
    for p in U:
        ones = zeros = 0
        for h in H:
            v = h.expected_map.get(p)
            if v is True:
                ones += 1
            elif v is False:
                zeros += 1
        key = (-(ones * zeros), -(ones + zeros), str(p))
        if best_key is None or key < best_key:
            best_key, best = key, p
    if best is None:
        raise ValueError("select_precondition needs a nonempty U")
    return best


def _names(atoms: Iterable[Atom]) -> list[str]:
    return sorted(str(a) for a in atoms)


_TERMINAL = frozenset({"step_cap", "no_hypotheses"})


class _Episode:
    def __init__(self, env, schema: DomainSchema, goal: GoalConstraints,
                 predictor: Predictor | None, config: ControllerConfig,
                 on_commit: Callable[[CommitRecord], None] | None, episode: int):
        self.env = env
        self.schema = schema
        self.rules = schema.rule_set
        self.goal = goal
        self.predictor = predictor
        self.cfg = config
        self.on_commit = on_commit
        self.trace = Trace(episode)
        self.trace.clock = lambda: env.steps
        self.queries = 0
        self.commits: list[CommitRecord] = []
        self.counterexamples: list[Counterexample] = []
        self.calibration: list = []
        self._pending: dict[Atom, list[tuple[bool, float]]] = {}
        self.w = GroundedStore()
        self.beliefs = BeliefStore()
        self.H: tuple[Hypothesis, ...] = ()

    # -- episode wrapper ---------------------------------------------------

    def run(self) -> EpisodeOutcome:
        cfg = self.cfg
        self.w = self.env.initial_observation()
        self.w0 = self.w.domain
        self.trace.emit("start", goal=str(self.goal), mode=cfg.mode.value,
                        w0=[format_fact(f) for f in self.w.facts()])
        rounds = 0
        success = False
        failure = None
        while True:
            h, tag = self._plan_round(rounds)
            if h is not None:
                done, tag = self._commit_and_execute(h, rounds)
                if done:
                    success = self.env.goal_reached()
                    failure = None if success else "goal_not_reached"
                    break
            if tag in _TERMINAL:
                failure = tag
                break
            if rounds >= cfg.replan_cap:
                failure = "replan_cap"
                break
            rounds += 1
            self.trace.emit("replan", round=rounds, reason=tag)
        if success:
            self.trace.emit("success", rounds=rounds, queries=self.queries)
        else:
            self.trace.emit("fail", reason=failure, final=True)
        return EpisodeOutcome(
            success=success,
            replanning_rounds=rounds if success else cfg.replan_cap,
            rounds_used=rounds,
            queries_used=self.queries,
            committed_plans=[c.hypothesis.id for c in self.commits],
            final_state=self.w,
            trace=self.trace.events,
            failure=failure,
            steps=self.env.steps,
            commits=self.commits,
            counterexamples=self.counterexamples,
            calibration=self.calibration,
        )

    # -- one round ---------------------------------------------------------

    def _plan_round(self, r: int) -> tuple[Hypothesis | None, str | None]:
        cfg = self.cfg
        self.beliefs = BeliefStore()
        self.H = generate_hypotheses(self.w, self.goal, self.schema, cfg.hypothesis_limit,
                                     max_assumptions=cfg.max_assumptions,
                                     max_depth=cfg.max_depth)
        self.trace.emit("generate", round=r, hypotheses=[h.to_dict() for h in self.H])
        if not self.H:
            self.trace.emit("fail", reason="no_hypotheses", round=r)
            return None, "no_hypotheses"
        if cfg.mode is Mode.DIRECT:
            return best_hypothesis(self.H), None
        budget = cfg.max_queries
        eps, tau = cfg.gate()
        while True:
            while True:
                if self.env.exhausted:
                    return None, "step_cap"
                U = union_unresolved(EpistemicState(self.w, self.beliefs, self.H))
                if not U or budget <= 0 or not self.H:
                    break
                p = select_precondition(U, self.H)
                if cfg.mode is Mode.QUERY_ONLY:
                    self._query(p, "forced")
                    budget -= 1
                    continue
                pred = self.predictor.predict(self.w, p)
                to_query = is_ambiguous(pred.mu, eps) or pred.sigma > tau
                self.trace.emit(
                    "predict", round=r, p=str(p), mu=pred.mu, sigma=pred.sigma,
                    epsilon=eps, tau=None if math.isinf(tau) else tau,
                    branch="query" if to_query else "simulate",
                    inputs=_names(self.w.domain), beliefs=_names(self.beliefs.domain))
                v_hat = pred.mu >= 0.5
                self._pending.setdefault(p, []).append((v_hat, pred.sigma))
                if to_query:
                    self._query(p, "gate")
                    budget -= 1
                else:
                    self.beliefs = insert_belief(self.beliefs, p, v_hat, pred.sigma,
                                                 grounded=self.w)
                    self.trace.emit("simulate", round=r, p=str(p), value=int(v_hat),
                                    sigma=pred.sigma)
                    self._filter(p, v_hat, "belief")
            if not self.H:
                self.trace.emit("fail", reason="hypotheses_exhausted", round=r)
                return None, "hypotheses_exhausted"
            h = best_hypothesis(self.H)
            if cfg.mode is Mode.NO_VERIFICATION:
                return h, None
            verdict = verify(h, self.w, self.goal, self.schema)
            self.trace.emit("verify", round=r, hypothesis=h.id, passed=verdict.passed,
                            audit=[list(e) for e in verdict.audit],
                            inputs=_names(self.w.domain), beliefs=_names(self.beliefs.domain))
            if verdict.passed:
                return h, None
            failures = verdict.failures()
            gaps = [Atom.parse(e.subject) for e in failures
                    if e.check == "pre" and e.source in ("uncovered", "rule-conflict")]
            if not gaps or len(gaps) != len(failures) or budget <= 0:
                self.trace.emit("fail", reason="verify_rejected", round=r, hypothesis=h.id)
                return None, "verify_rejected"
            self.trace.emit("gap_query", round=r, hypothesis=h.id, gaps=_names(gaps))
            for p in sorted(gaps, key=str):
                if budget <= 0 or self.env.exhausted:
                    break
                if p not in self.w:
                    self._query(p, "gap")
                    budget -= 1

    def _filter(self, p: Atom, v: bool, source: str) -> None:
        before = len(self.H)
        self.H = filter_hypotheses(self.H, p, v)
        self.trace.emit("filter", p=str(p), value=int(v), source=source,
                        removed=before - len(self.H), kept=[h.id for h in self.H])

    def _ground(self, atom: Atom, value: bool) -> None:
        for v_hat, sigma in self._pending.pop(atom, ()):
            self.calibration.append((atom, v_hat, value, sigma))

    def _query(self, p: Atom, reason: str) -> None:
        prior = self.rules.closure(self.w)
        res = self.env.query(p)
        self.queries += 1
        observed = [(p, res.value)] + [(f.atom, f.value) for f in res.delta]
        for atom, v in observed:
            if prior.derives(atom, not v):
                self.counterexamples.append(Counterexample(
                    CounterexampleKind.ENTAILMENT_CONTRADICTION, atom, not v, v,
                    prior.support[(atom, not v)]))
        old = self.w
        try:
            self.w = ground_update(old, p, res.value, res.delta,
                                   allow_override=self.cfg.evidence_override)
        except GroundingConflict as e:
            self.counterexamples.append(Counterexample(
                CounterexampleKind.GROUNDING_CONFLICT, p, e.old, e.new))
            self.w = ground_update(old, p, e.old, res.delta)
        touched = [a for a, _ in observed]
        self.beliefs = self.beliefs.without(touched)
        self.trace.emit("query", p=str(p), value=int(res.value), reason=reason,
                        delta=[format_fact(f) for f in res.delta], steps=res.steps,
                        queries=self.queries)
        changed = sorted((a for a in touched if old.get(a) != self.w[a]), key=str)
        for a in changed:
            self._ground(a, self.w[a])
            if any(a in h.expected_map for h in self.H):
                self._filter(a, self.w[a], "grounded")

    # -- commitment and execution -----------------------------------------

    def _commit_and_execute(self, h: Hypothesis, r: int) -> tuple[bool, str | None]:
        q = frozenset(self.w.domain - self.w0)
        record = CommitRecord(round=r, hypothesis=h, grounded=self.w, new_atoms=q,
                              verified=self.cfg.mode.gated)
        if self.on_commit is not None:
            self.on_commit(record)
        self.commits.append(record)
        self.trace.emit("commit", round=r, hypothesis=h.to_dict(), gated=record.verified,
                        Q=_names(q), feasible=record.feasible, bound=record.bound)
        for i, action in enumerate(h.plan):
            if self.env.exhausted:
                return False, "step_cap"
            prior = self.rules.closure(self.w)
            res = self.env.execute(action)
            self.trace.emit("execute", round=r, step=i, action=str(action),
                            success=res.success,
                            feedback=[format_fact(f) for f in res.feedback])
            if res.success:
                expected = dict(self.w)
                for a, v in action.effects():
                    expected[a] = v
            else:
                expected = dict(self.w)
            found = []
            for f in res.feedback:
                want = expected.get(f.atom)
                if want is None and prior.derives(f.atom, not f.value) and f.atom not in self.w:
                    self.counterexamples.append(Counterexample(
                        CounterexampleKind.ENTAILMENT_CONTRADICTION, f.atom, not f.value,
                        f.value, prior.support[(f.atom, not f.value)]))
                if want is not None and want != f.value:
                    found.append(Counterexample(
                        CounterexampleKind.EXECUTION_CONTRADICTION, f.atom, want, f.value))
            self.counterexamples.extend(found)
            old = self.w
            _, self.w = repair(found, self.schema, self.w.updated(res.feedback))
            for f in res.feedback:
                if old.get(f.atom) != f.value:
                    self._ground(f.atom, f.value)
            if not res.success:
                return False, "action_failed"
            rest = plan_requirements(h.plan[i + 1:], self.goal)
            clash = sorted((str(a) for a, v in rest.items() if a in self.w and self.w[a] != v))
            if clash:
                self.trace.emit("contradiction", round=r, step=i, atoms=clash)
                return False, "contradiction"
        if goal_satisfied(self.w, self.goal, self.rules):
            return True, None
        return False, "goal_not_reached"


def run_episode(env, schema: DomainSchema, goal: GoalConstraints, predictor: Predictor | None,
                config: ControllerConfig, *, on_commit: Callable[[CommitRecord], None] | None = None,
                episode: int = 0) -> EpisodeOutcome:
    """Run one episode against ``env`` and return its outcome and trace.

    ``on_commit`` is called with each :class:`CommitRecord` before the first
    action of the committed plan runs; the harness uses it to score
    feasibility against the hidden world.
    """
    if predictor is None and config.mode not in (Mode.DIRECT, Mode.QUERY_ONLY):
        raise ValueError(f"mode {config.mode.value} needs a predictor")
    return _Episode(env, schema, goal, predictor, config, on_commit, episode).run()


# --------------------------------------------------------------------------
# Trace audits
# --------------------------------------------------------------------------

def leakage_violations(trace: Iterable[dict]) -> list[dict]:
    """Predictor or verifier calls whose inputs overlap the belief store."""
    out = []
    for e in trace:
        if e.get("event") in ("predict", "verify"):
            if set(e.get("inputs", ())) & set(e.get("beliefs", ())):
                out.append(e)
    return out


def assert_no_leakage(trace: Iterable[dict]) -> bool:
    return not leakage_violations(trace)


def gate_violations(trace: Sequence[dict]) -> list[dict]:
    """Predict events whose branch disagrees with the gate rule.

    The branch must be ``query`` iff ``|mu - 0.5| < epsilon`` or
    ``sigma > tau``, and the next query/simulate event must follow it for the
    same predicate.
    """
    trace = list(trace)
    out = []
    for k, e in enumerate(trace):
        if e.get("event") != "predict":
            continue
        tau = math.inf if e["tau"] is None else e["tau"]
        want = "query" if (is_ambiguous(e["mu"], e["epsilon"]) or e["sigma"] > tau) else "simulate"
        nxt = next((x for x in trace[k + 1:] if x.get("event") in ("query", "simulate")), None)
        if (e["branch"] != want or nxt is None or nxt["event"] != want
                or nxt["p"] != e["p"] or nxt.get("episode") != e.get("episode")):
            out.append(e)
    return out


def commit_gate_violations(trace: Sequence[dict]) -> list[dict]:
    """Gated commits not preceded by a passing verdict on the same hypothesis."""
    out = []
    last_verify: dict | None = None
    for e in trace:
        ev = e.get("event")
        if ev == "start":
            last_verify = None
        elif ev == "verify":
            last_verify = e
        elif ev == "commit" and e.get("gated"):
            ok = (last_verify is not None and last_verify["passed"]
                  and last_verify["hypothesis"] == e["hypothesis"]["id"]
                  and last_verify["round"] == e["round"])
            if not ok:
                out.append(e)
    return out
