"""Refinement: recalibrate the predictor and drop rules that observations refute.

The corpus starts with an over-permissive rule (closed receptacles are
empty) and an overconfident predictor. Between iterations the predictor's
noise scale is refit so its uncertainty covers its observed error rate, and
rules blamed for at least two contradictions are switched off.

Run: python3 demos/05_refinement.py
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from aec.config import load_config
from aec.harness import run_refinement

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "refinement.yaml")
for r in run_refinement(replace(cfg, episodes=500)):
    print(f"iteration {r.iteration}: success {r.success_rate:6.2f}%  "
          f"queries {r.mean_queries_used:.3f}  replans {r.mean_replanning_rounds:.3f}  "
          f"noise {r.noise_scale:.3f}  counterexamples {r.counterexamples}  "
          f"disabled {r.disabled_rules}  sweep violations {r.soundness['violations']}")
