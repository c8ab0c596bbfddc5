"""Monte Carlo corpus runner, reports, feasibility-bound check and sweeps.

Episode ``i`` of a corpus draws its hidden world, goal, start observation,
query noise and predictor votes from independent streams spawned from
``SeedSequence([seed, i])``. Two corpora with the same seed therefore share
worlds and goals episode by episode, which is what the paired comparisons
rely on. Results are reduced in episode order regardless of worker timing.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import statistics
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .controller import (CommitRecord, Mode, commit_gate_violations, gate_violations,
                         leakage_violations, run_episode)
from .domain import DomainSchema
from .environment import (Environment, HiddenWorld, candidate_goals, enumerate_worlds,
                          load_domain, micro_schema, sample_goal, sample_world,
                          visible_facts)
from .hypotheses import generate_hypotheses
from .predictor import CalibrationRecord, SyntheticPredictor, recalibrate
from .store import Atom, GroundedStore
from .verifier import Counterexample, brute_force_feasible, repair, verify

__all__ = [
    "AggregateReport", "EpisodeRecord", "PairedComparison", "SoundnessReport",
    "Theorem1Report", "ablate", "aggregate", "episode_streams", "paired_comparison",
    "run_corpus", "run_episodes", "run_one", "run_refinement", "soundness_sweep",
    "validate_theorem1", "write_outputs",
]

Z_95 = 1.6448536269514722


# --------------------------------------------------------------------------
# Single episodes
# --------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    """Everything the harness keeps from one episode."""

    index: int
    goal: str
    success: bool
    replanning_rounds: int
    rounds_used: int
    queries_used: int
    steps: int
    failure: str | None
    commits: list[dict]
    counterexamples: list[Counterexample]
    calibration: list[CalibrationRecord]
    leakage_violations: int
    gate_violations: int
    commit_gate_violations: int
    predictions: int
    trace: list[str] = field(default_factory=list)

    @property
    def infeasible_commits(self) -> int:
        return sum(1 for c in self.commits if c["feasible"] is False)

    def summary(self) -> dict:
        return {
            "episode": self.index, "goal": self.goal, "success": self.success,
            "replanning_rounds": self.replanning_rounds, "rounds_used": self.rounds_used,
            "queries_used": self.queries_used, "steps": self.steps, "failure": self.failure,
            "commits": self.commits,
        }


def episode_streams(seed: int, index: int, predictor_seed: int = 0) -> dict[str, np.random.Generator]:
    world, goal, grounding, oracle = np.random.SeedSequence([seed, index]).spawn(4)
    pred = np.random.SeedSequence([seed, index, 1, predictor_seed])
    return {name: np.random.default_rng(ss) for name, ss in
            (("world", world), ("goal", goal), ("grounding", grounding),
             ("oracle", oracle), ("predictor", pred))}


@lru_cache(maxsize=32)
def _schema(env, enable: tuple[str, ...], disable: tuple[str, ...]) -> DomainSchema:
    schema = load_domain(env)
    if enable or disable:
        schema = schema.with_rules(enable, disable)
    return schema


def _rule_overrides(cfg: ExperimentConfig, schema: DomainSchema | None):
    """Express ``schema``'s rule switches relative to the built-in domain."""
    if schema is None:
        return cfg.enable_rules, cfg.disable_rules
    base = {r.id: r.enabled for r in load_domain(cfg.env).rules}
    enable = tuple(sorted(r.id for r in schema.rules if r.enabled and not base[r.id]))
    disable = tuple(sorted(r.id for r in schema.rules if not r.enabled and base[r.id]))
    return enable, disable


def run_one(cfg: ExperimentConfig, index: int, schema: DomainSchema | None = None,
            keep_trace: bool = False) -> EpisodeRecord:
    """Run episode ``index`` of the corpus described by ``cfg``."""
    if schema is None:
        schema = _schema(cfg.env, cfg.enable_rules, cfg.disable_rules)
    rng = episode_streams(cfg.seed, index, cfg.predictor.seed)
    world = sample_world(cfg.env, schema, rng["world"])
    goal = sample_goal(world, rng["goal"])
    env = Environment(world, goal, cfg.env, cfg.oracle, rng["oracle"], rng["grounding"])
    predictor = SyntheticPredictor(cfg.predictor, world, rng["predictor"])

    def on_commit(record: CommitRecord) -> None:
        snapshot = env.hidden_snapshot()
        record.feasible = brute_force_feasible(record.hypothesis, snapshot, schema, goal)
        record.bound = 1.0 - sum(cfg.oracle.rate(a) for a in record.new_atoms)

    outcome = run_episode(env, schema, goal, predictor, cfg.controller,
                          on_commit=on_commit, episode=index)
    trace = outcome.trace
    return EpisodeRecord(
        index=index,
        goal=str(goal),
        success=outcome.success,
        replanning_rounds=outcome.replanning_rounds,
        rounds_used=outcome.rounds_used,
        queries_used=outcome.queries_used,
        steps=outcome.steps,
        failure=outcome.failure,
        commits=[{"hypothesis": c.hypothesis.id, "round": c.round, "gated": c.verified,
                  "feasible": c.feasible, "bound": c.bound, "q": len(c.new_atoms)}
                 for c in outcome.commits],
        counterexamples=outcome.counterexamples,
        calibration=[CalibrationRecord(*c) for c in outcome.calibration],
        leakage_violations=len(leakage_violations(trace)),
        gate_violations=len(gate_violations(trace)),
        commit_gate_violations=len(commit_gate_violations(trace)),
        predictions=sum(1 for e in trace if e["event"] == "predict"),
        trace=[json.dumps(e, sort_keys=True, separators=(",", ":")) for e in trace]
        if keep_trace else [],
    )


def _run_chunk(args) -> list[EpisodeRecord]:
    cfg, enable, disable, indices, keep = args
    schema = _schema(cfg.env, enable, disable)
    return [run_one(cfg, i, schema, keep) for i in indices]


def run_episodes(cfg: ExperimentConfig, schema: DomainSchema | None = None,
                 keep_traces: bool = False) -> list[EpisodeRecord]:
    """All episodes of ``cfg`` in index order, fanned out over ``cfg.parallelism`` workers."""
    enable, disable = _rule_overrides(cfg, schema)
    indices = list(range(cfg.episodes))
    if cfg.parallelism <= 1:
        return _run_chunk((cfg, enable, disable, indices, keep_traces))
    n_chunks = cfg.parallelism * 4
    chunks = [indices[k::n_chunks] for k in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, enable, disable, c, keep_traces)
                                           for c in chunks if c]))
    records = [r for part in parts for r in part]
    records.sort(key=lambda r: r.index)
    return records


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class Theorem1Report:
    """Feasibility of verified commits against ``1 - sum_{p in Q} eps(p)``.

    Only commits that passed the verifier are covered; ungated modes report
    zero commits here and are marked inconclusive.
    """

    commits: int
    feasible: int
    infeasible: int
    empirical_feasibility: float
    mean_bound: float
    standard_error: float
    margin: float
    bound_satisfied: bool
    inconclusive: bool

    @classmethod
    def from_commits(cls, commits: Sequence[dict], min_commits: int = 100) -> Theorem1Report:
        n = len(commits)
        feasible = sum(1 for c in commits if c["feasible"])
        if n == 0:
            return cls(0, 0, 0, 1.0, 1.0, 0.0, 0.0, True, True)
        p = feasible / n
        bound = float(np.mean([max(0.0, c["bound"]) for c in commits]))
        se = math.sqrt(p * (1 - p) / n)
        margin = 3 * se
        return cls(n, feasible, n - feasible, p, bound, se, margin,
                   p >= bound - margin, n < min_commits)


@dataclass
class AggregateReport:
    name: str
    mode: str
    episodes: int
    success_rate: float
    mean_replanning_rounds: float
    median_replanning_rounds: float
    mean_queries_used: float
    mean_steps: float
    commits: int
    infeasible_commits: int
    infeasible_commit_rate: float
    failures: dict[str, int]
    leakage_violations: int
    gate_violations: int
    commit_gate_violations: int
    theorem1: Theorem1Report
    iteration: int | None = None
    noise_scale: float | None = None
    disabled_rules: list[str] = field(default_factory=list)
    counterexamples: int = 0
    soundness: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def summary(self) -> str:
        t = self.theorem1
        lines = [
            f"{self.name} [{self.mode}] episodes={self.episodes}"
            + (f" iteration={self.iteration}" if self.iteration is not None else ""),
            f"  success rate          {self.success_rate:.2f}%",
            f"  replanning rounds     mean {self.mean_replanning_rounds:.3f}  "
            f"median {self.median_replanning_rounds:.1f}",
            f"  queries used          mean {self.mean_queries_used:.3f}",
            f"  environment steps     mean {self.mean_steps:.3f}",
            f"  commits               {self.commits} ({self.infeasible_commits} infeasible, "
            f"rate {self.infeasible_commit_rate:.4f})",
            f"  feasibility bound     empirical {t.empirical_feasibility:.4f} vs mean bound "
            f"{t.mean_bound:.4f} - margin {t.margin:.4f}: "
            + ("inconclusive" if t.inconclusive else
               ("holds" if t.bound_satisfied else "VIOLATED")),
            f"  audits                leakage {self.leakage_violations}, gate "
            f"{self.gate_violations}, commit gate {self.commit_gate_violations}",
        ]
        if self.failures:
            lines.append("  failures              " + ", ".join(
                f"{k}={v}" for k, v in sorted(self.failures.items())))
        if self.disabled_rules:
            lines.append("  disabled rules        " + ", ".join(self.disabled_rules))
        if self.noise_scale is not None:
            lines.append(f"  predictor noise scale {self.noise_scale:.6f}")
        if self.soundness is not None:
            lines.append(f"  soundness sweep       {self.soundness['violations']} violations "
                         f"in {self.soundness['verified']} verified instances")
        return "\n".join(lines) + "\n"


def aggregate(records: Sequence[EpisodeRecord], cfg: ExperimentConfig) -> AggregateReport:
    n = len(records)
    commits = [c for r in records for c in r.commits]
    infeasible = sum(1 for c in commits if c["feasible"] is False)
    rounds = [r.replanning_rounds for r in records]
    return AggregateReport(
        name=cfg.name,
        mode=cfg.controller.mode.value,
        episodes=n,
        success_rate=100.0 * sum(r.success for r in records) / n,
        mean_replanning_rounds=float(np.mean(rounds)),
        median_replanning_rounds=float(statistics.median(rounds)),
        mean_queries_used=float(np.mean([r.queries_used for r in records])),
        mean_steps=float(np.mean([r.steps for r in records])),
        commits=len(commits),
        infeasible_commits=infeasible,
        infeasible_commit_rate=infeasible / len(commits) if commits else 0.0,
        failures=dict(sorted(Counter(r.failure for r in records if r.failure).items())),
        leakage_violations=sum(r.leakage_violations for r in records),
        gate_violations=sum(r.gate_violations for r in records),
        commit_gate_violations=sum(r.commit_gate_violations for r in records),
        theorem1=Theorem1Report.from_commits([c for c in commits if c["gated"]]),
        noise_scale=cfg.predictor.noise_scale,
        counterexamples=sum(len(r.counterexamples) for r in records),
    )


def write_outputs(out_dir: str | Path, records: Sequence[EpisodeRecord],
                  report: AggregateReport, prefix: str = "") -> None:
    """Write traces, per-episode rows, the JSON report and the text summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{prefix}traces.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            for line in r.trace:
                fh.write(line + "\n")
    with open(out / f"{prefix}episodes.tsv", "w", encoding="utf-8") as fh:
        fh.write("episode\tsuccess\treplanning_rounds\tqueries_used\tsteps\tcommits\t"
                 "infeasible_commits\tfailure\n")
        for r in records:
            fh.write(f"{r.index}\t{int(r.success)}\t{r.replanning_rounds}\t{r.queries_used}\t"
                     f"{r.steps}\t{len(r.commits)}\t{r.infeasible_commits}\t{r.failure or ''}\n")
    (out / f"{prefix}report.json").write_text(report.to_json(), encoding="utf-8")
    (out / f"{prefix}summary.txt").write_text(report.summary(), encoding="utf-8")


def run_corpus(cfg: ExperimentConfig, schema: DomainSchema | None = None) -> AggregateReport:
    """Run the corpus, write outputs when ``cfg.out_dir`` is set, return the report."""
    keep = cfg.out_dir is not None
    records = run_episodes(cfg, schema, keep_traces=keep)
    report = aggregate(records, cfg)
    if schema is not None:
        report.disabled_rules = sorted(schema.disabled_rules)
    if keep:
        write_outputs(cfg.out_dir, records, report)
    return report


def validate_theorem1(cfg: ExperimentConfig, n: int | None = None) -> Theorem1Report:
    """Run ``n`` episodes (default ``cfg.episodes``) and check the feasibility bound."""
    if n is not None:
        cfg = replace(cfg, episodes=n)
    return run_corpus(cfg).theorem1


# --------------------------------------------------------------------------
# Paired comparisons and ablations
# --------------------------------------------------------------------------

@dataclass
class PairedComparison:
    """One-sided paired test of ``mean(a - b)`` against zero at 95%."""

    metric: str
    n: int
    mean_a: float
    mean_b: float
    mean_difference: float
    standard_error: float
    lower_bound: float

    @property
    def greater(self) -> bool:
        return self.lower_bound > 0

    @property
    def not_less(self) -> bool:
        return self.lower_bound >= 0


def paired_comparison(metric: str, a: Sequence[float], b: Sequence[float]) -> PairedComparison:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("paired samples need equal lengths of at least two")
    d = a - b
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    mean = float(d.mean())
    return PairedComparison(metric, int(d.size), float(a.mean()), float(b.mean()),
                            mean, se, mean - Z_95 * se)


_METRICS = {
    "infeasible_commit": lambda r: float(r.infeasible_commits > 0),
    "replanning_rounds": lambda r: float(r.replanning_rounds),
    "queries_used": lambda r: float(r.queries_used),
    "success": lambda r: float(r.success),
}


def ablate(cfg: ExperimentConfig, modes: Iterable[Mode | str] = tuple(Mode),
           schema: DomainSchema | None = None):
    """Run the same corpus under each mode.

    Returns per-mode reports, per-mode records and paired comparisons of
    every mode against AEC on every metric.
    """
    modes = [Mode(m) for m in modes]
    reports: dict[str, AggregateReport] = {}
    records: dict[str, list[EpisodeRecord]] = {}
    for mode in modes:
        mcfg = cfg.with_mode(mode)
        if cfg.out_dir is not None:
            mcfg = replace(mcfg, out_dir=str(Path(cfg.out_dir) / mode.value))
        recs = run_episodes(mcfg, schema, keep_traces=mcfg.out_dir is not None)
        rep = aggregate(recs, mcfg)
        if mcfg.out_dir is not None:
            write_outputs(mcfg.out_dir, recs, rep)
        reports[mode.value] = rep
        records[mode.value] = recs
    comparisons: dict[str, dict[str, PairedComparison]] = {}
    if Mode.AEC.value in records:
        base = records[Mode.AEC.value]
        for name, recs in records.items():
            if name == Mode.AEC.value:
                continue
            comparisons[name] = {
                metric: paired_comparison(metric, [f(r) for r in recs], [f(r) for r in base])
                for metric, f in _METRICS.items()}
    return reports, records, comparisons


# --------------------------------------------------------------------------
# Soundness sweep
# --------------------------------------------------------------------------

@dataclass
class SoundnessReport:
    worlds: int
    goals: int
    stores: int
    checked: int
    verified: int
    violations: int
    examples: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _correct_stores(truth: dict[Atom, bool], base: dict[Atom, bool]) -> list[GroundedStore]:
    """``base`` extended by every subset of the atoms it leaves unknown, all true-valued."""
    unknown = sorted((a for a in truth if a not in base), key=str)
    out = []
    for k in range(len(unknown) + 1):
        for subset in itertools.combinations(unknown, k):
            facts = dict(base)
            facts.update({a: truth[a] for a in subset})
            out.append(GroundedStore.from_values(facts))
    return out


def soundness_sweep(schema: DomainSchema | None = None, *, max_examples: int = 5) -> SoundnessReport:
    """Exhaustive verifier soundness check on the micro domain.

    For every world consistent with the schema constraints, every goal that does not already hold, every
    grounded store made of correct facts (the start observation plus any
    subset of the remaining truth) and every hypothesis the generator
    produces for that goal from any such store, a passing verdict must imply
    the plan is feasible in the hidden world.
    """
    schema = schema or micro_schema()
    worlds = [HiddenWorld(schema, t) for t in enumerate_worlds(schema)]
    per_world = []
    pool: dict[str, dict] = {}
    for world in worlds:
        stores = _correct_stores(world.truth, visible_facts(world))
        goals = candidate_goals(world)
        per_world.append((world, stores, goals))
        for goal in goals:
            bucket = pool.setdefault(str(goal), {})
            for store in stores:
                for h in generate_hypotheses(store, goal, schema):
                    bucket.setdefault((h.plan, h.expected), h)
    checked = verified = violations = 0
    n_stores = 0
    n_goals = 0
    examples: list[str] = []
    for world, stores, goals in per_world:
        n_stores += len(stores)
        n_goals += len(goals)
        for goal in goals:
            hyps = list(pool[str(goal)].values())
            feasible = {id(h): brute_force_feasible(h, world.truth, schema, goal) for h in hyps}
            for store in stores:
                for h in hyps:
                    checked += 1
                    if verify(h, store, goal, schema).passed:
                        verified += 1
                        if not feasible[id(h)]:
                            violations += 1
                            if len(examples) < max_examples:
                                examples.append(f"goal {goal}; plan {[str(a) for a in h.plan]}")
    return SoundnessReport(len(worlds), n_goals, n_stores, checked, verified, violations, examples)


# --------------------------------------------------------------------------
# Refinement
# --------------------------------------------------------------------------

def run_refinement(cfg: ExperimentConfig) -> list[AggregateReport]:
    """Run the corpus ``cfg.iterations`` times, refining between iterations.

    After each iteration the predictor is recalibrated on the predictions
    that were later checked against grounded facts, and rules implicated in
    at least ``cfg.repair_threshold`` entailment contradictions are disabled.
    The corpus (seeds, worlds, goals) is the same every iteration. On the
    micro domain the soundness sweep is rerun with each iteration's rules.
    """
    schema = cfg.schema()
    pcfg = cfg.predictor
    reports = []
    out = Path(cfg.out_dir) if cfg.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "counterexamples.jsonl").write_text("", encoding="utf-8")
    for it in range(cfg.iterations):
        icfg = replace(cfg, predictor=pcfg)
        records = run_episodes(icfg, schema, keep_traces=out is not None)
        report = aggregate(records, icfg)
        report.iteration = it
        report.disabled_rules = sorted(schema.disabled_rules)
        if cfg.env.domain == "micro":
            report.soundness = soundness_sweep(schema).to_dict()
        counterexamples = [c for r in records for c in r.counterexamples]
        if out is not None:
            write_outputs(out, records, report, prefix=f"iter{it}_")
            with open(out / "counterexamples.jsonl", "a", encoding="utf-8") as fh:
                for r in records:
                    for c in r.counterexamples:
                        fh.write(json.dumps({"iteration": it, "episode": r.index, **c.to_dict()},
                                            sort_keys=True) + "\n")
        reports.append(report)
        if it + 1 < cfg.iterations:
            pcfg = recalibrate(pcfg, [c for r in records for c in r.calibration])
            schema, _ = repair(counterexamples, schema, GroundedStore(),
                               threshold=cfg.repair_threshold)
    return reports
