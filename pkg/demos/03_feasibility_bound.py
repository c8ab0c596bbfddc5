"""Feasibility of verified commits against the union bound.

Each verified commit carries the bound ``1 - sum of oracle error rates`` over
the predicates grounded since the start observation. The empirical feasible
fraction should sit at or above the mean bound.

Run: python3 demos/03_feasibility_bound.py
"""

from __future__ import annotations

from aec.config import config_from_dict
from aec.harness import run_corpus

for eps in (0.0, 0.01, 0.05, 0.2):
    cfg = config_from_dict({"seed": 1, "episodes": 2000, "env": {"domain": "household"},
                            "oracle": {"error_rates": {"*": eps}}})
    t = run_corpus(cfg).theorem1
    print(f"eps={eps:<5} commits={t.commits:5d} feasible={t.empirical_feasibility:.4f} "
          f"bound={t.mean_bound:.4f} margin={t.margin:.4f} "
          f"{'holds' if t.bound_satisfied else 'VIOLATED'}")
