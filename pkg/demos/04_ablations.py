"""The controller modes on one shared corpus.

Every mode sees the same worlds, goals and oracle noise, so differences are
paired. Comparisons are against AEC with a one-sided 95% lower bound.

Run: python3 demos/04_ablations.py
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from aec.config import load_config
from aec.harness import ablate

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "ablation.yaml")
cfg = replace(cfg, episodes=1000)
reports, _, comps = ablate(cfg)

print(f"{'mode':<15}{'success':>9}{'infeasible':>12}{'replans':>9}{'queries':>9}")
for mode, r in reports.items():
    print(f"{mode:<15}{r.success_rate:>8.1f}%{r.infeasible_commit_rate:>12.4f}"
          f"{r.mean_replanning_rounds:>9.3f}{r.mean_queries_used:>9.3f}")
print()
for mode, metrics in comps.items():
    c = metrics["infeasible_commit"]
    print(f"{mode} - AEC infeasible commits: {c.mean_difference:+.4f} "
          f"(95% lower bound {c.lower_bound:+.4f})")
