"""One controller episode, narrated from its event trace.

Run: python3 demos/02_single_episode.py [seed]
"""

from __future__ import annotations

import json
import sys

from aec.config import config_from_dict
from aec.harness import run_one

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
cfg = config_from_dict({"seed": seed, "episodes": 1,
                        "predictor": {"accuracy": 0.7},
                        "oracle": {"error_rates": {"*": 0.02}}})
rec = run_one(cfg, 0, keep_trace=True)

for line in rec.trace:
    e = json.loads(line)
    kind = e["event"]
    if kind == "start":
        print(f"goal {e['goal']}; start facts: {', '.join(e['w0'])}")
    elif kind == "generate":
        print(f"round {e['round']}: {len(e['hypotheses'])} hypotheses")
    elif kind == "predict":
        print(f"  predict {e['p']}: mu={e['mu']:.2f} sigma={e['sigma']:.2f} -> {e['branch']}")
    elif kind == "query":
        print(f"  query {e['p']} = {e['value']} ({e['reason']}); side effects {e['delta']}")
    elif kind == "simulate":
        print(f"  believe {e['p']} = {e['value']}")
    elif kind == "verify":
        print(f"  verify {e['hypothesis']}: {'pass' if e['passed'] else 'fail'}")
    elif kind == "commit":
        print(f"  commit {e['hypothesis']['plan']} (feasible in hidden world: {e['feasible']})")
    elif kind == "execute":
        print(f"    {e['action']}: {'ok' if e['success'] else 'failed'}")
    elif kind == "replan":
        print(f"replan: {e['reason']}")
    elif kind == "fail" and e.get("final"):
        print(f"episode failed: {e['reason']}")
print(f"success={rec.success} queries={rec.queries_used} replans={rec.replanning_rounds}")
