"""Command-line entry point.

Subcommands::

    aec run                 run a corpus and write its outputs
    aec validate-theorem1   run a corpus and check the feasibility bound
    aec refine              iterate the corpus with recalibration and repair
    aec ablate              run the corpus under every controller mode
    aec audit-leakage DIR   check every trace file under DIR for belief leakage

Exit codes are 0 on success, 1 when a checked property is violated and 2 on
a configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .controller import Mode, gate_violations, leakage_violations
from .harness import ablate, run_corpus, run_refinement

__all__ = ["audit_traces", "main"]

OK, VIOLATION, CONFIG_ERROR = 0, 1, 2


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.episodes is not None:
        updates["episodes"] = args.episodes
    if args.parallelism is not None:
        updates["parallelism"] = args.parallelism
    return replace(cfg, **updates) if updates else cfg


def _audits_clean(report) -> bool:
    return (report.leakage_violations == 0 and report.gate_violations == 0
            and report.commit_gate_violations == 0)


def _bound_ok(report) -> bool:
    return report.theorem1.inconclusive or report.theorem1.bound_satisfied


def _cmd_run(cfg: ExperimentConfig, args) -> int:
    report = run_corpus(cfg)
    sys.stdout.write(report.summary())
    return OK if _audits_clean(report) else VIOLATION


def _cmd_validate(cfg: ExperimentConfig, args) -> int:
    report = run_corpus(cfg)
    sys.stdout.write(report.summary())
    t = report.theorem1
    print(f"theorem1 {'PASS' if t.bound_satisfied else 'FAIL'}: {t.feasible}/{t.commits} "
          f"feasible, empirical {t.empirical_feasibility:.4f} >= "
          f"{t.mean_bound:.4f} - {t.margin:.4f}")
    return OK if t.bound_satisfied and _audits_clean(report) else VIOLATION


def _cmd_refine(cfg: ExperimentConfig, args) -> int:
    reports = run_refinement(cfg)
    for r in reports:
        sys.stdout.write(r.summary())
    rates = [r.success_rate for r in reports]
    monotone = all(b >= a for a, b in zip(rates, rates[1:]))
    sound = all(r.soundness is None or r.soundness["violations"] == 0 for r in reports)
    print("success by iteration: " + ", ".join(f"{x:.2f}" for x in rates)
          + ("" if monotone else "  (decreased)"))
    if cfg.out_dir is not None:
        Path(cfg.out_dir, "refinement.json").write_text(
            json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
    return OK if monotone and sound and all(_audits_clean(r) for r in reports) else VIOLATION


def _cmd_ablate(cfg: ExperimentConfig, args) -> int:
    modes = args.modes or [m.value for m in Mode]
    reports, _, comparisons = ablate(cfg, modes)
    for r in reports.values():
        sys.stdout.write(r.summary())
    for mode, metrics in comparisons.items():
        for metric, c in metrics.items():
            print(f"{mode} - AEC {metric}: mean diff {c.mean_difference:+.4f}, "
                  f"95% lower bound {c.lower_bound:+.4f}")
    if cfg.out_dir is not None:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        Path(cfg.out_dir, "comparisons.json").write_text(json.dumps(
            {m: {k: vars(c) for k, c in v.items()} for m, v in comparisons.items()},
            sort_keys=True, indent=2) + "\n", encoding="utf-8")
    gated_ok = all(_audits_clean(r) and _bound_ok(r) for r in reports.values())
    return OK if gated_ok else VIOLATION


def audit_traces(directory: str | Path) -> dict[str, int]:
    """Leakage and gate violations over every ``*traces.jsonl`` below ``directory``."""
    files = sorted(Path(directory).rglob("*traces.jsonl"))
    events = leaks = gates = 0
    for path in files:
        episodes: dict[int, list[dict]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    e = json.loads(line)
                    episodes.setdefault(e.get("episode", 0), []).append(e)
        for trace in episodes.values():
            events += len(trace)
            leaks += len(leakage_violations(trace))
            gates += len(gate_violations(trace))
    return {"files": len(files), "events": events, "leakage_violations": leaks,
            "gate_violations": gates}


def _cmd_audit(args) -> int:
    if not Path(args.directory).is_dir():
        print(f"error: {args.directory} is not a directory", file=sys.stderr)
        return CONFIG_ERROR
    result = audit_traces(args.directory)
    print(json.dumps(result, sort_keys=True))
    if result["files"] == 0:
        print("error: no trace files found", file=sys.stderr)
        return CONFIG_ERROR
    return OK if result["leakage_violations"] == 0 else VIOLATION


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aec", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the corpus seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--episodes", type=int, help="override the episode count")
    common.add_argument("--parallelism", type=int, help="worker processes")
    sub.add_parser("run", parents=[common], help="run a corpus")
    sub.add_parser("validate-theorem1", parents=[common],
                   help="check feasibility of verified commits against the bound")
    sub.add_parser("refine", parents=[common], help="iterative refinement")
    ab = sub.add_parser("ablate", parents=[common], help="compare controller modes")
    ab.add_argument("--modes", nargs="+", choices=[m.value for m in Mode])
    audit = sub.add_parser("audit-leakage", help="audit a directory of traces")
    audit.add_argument("directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "audit-leakage":
        return _cmd_audit(args)
    try:
        cfg = _config(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    handler = {"run": _cmd_run, "validate-theorem1": _cmd_validate, "refine": _cmd_refine,
               "ablate": _cmd_ablate}[args.command]
    return handler(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
