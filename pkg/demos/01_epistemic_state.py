"""Grounded facts, beliefs and the unresolved set on the micro domain.

Run: python3 demos/01_epistemic_state.py
"""

from __future__ import annotations

import numpy as np

from aec import GoalConstraints, generate_hypotheses, micro_schema
from aec.environment import EnvInstanceConfig, HiddenWorld, OracleConfig, initial_grounding, query
from aec.store import (Atom, BeliefStore, EpistemicState, ground_update, insert_belief,
                       union_unresolved)

schema = micro_schema()

# %% A hidden world: o1 sits in the closed cabinet, o2 in the closed fridge.
truth = {a: False for a in schema.ground_atoms}
truth |= {Atom.parse(s): True for s in ("in(o1,c1)", "in(o2,c2)", "cold(o2)", "handempty()")}
world = HiddenWorld(schema, truth)

w = initial_grounding(world, EnvInstanceConfig())
print("start observation:")
print(w.dumps())

# %% Hypotheses for holding o1: one per possible location.
goal = GoalConstraints.parse("holding(o1)")
H = generate_hypotheses(w, goal, schema)
for h in H:
    print(h.id, [str(a) for a in h.plan], dict((str(a), int(v)) for a, v in h.expected))

state = EpistemicState(w, BeliefStore(), H)
print("unresolved:", sorted(map(str, union_unresolved(state))))

# %% A belief resolves a predicate without grounding it.
beliefs = insert_belief(BeliefStore(), Atom.parse("in(o1,c1)"), True, 0.1, grounded=w)
state = EpistemicState(w, beliefs, H)
print("unresolved after a belief:", sorted(map(str, union_unresolved(state))))

# %% A query grounds it, opens the cabinet and reports what is inside.
res = query(world, Atom.parse("in(o1,c1)"), OracleConfig(), np.random.default_rng(0))
w = ground_update(w, Atom.parse("in(o1,c1)"), res.value, res.delta)
beliefs = beliefs.without([Atom.parse("in(o1,c1)")] + [f.atom for f in res.delta])
print("after the query:")
print(w.dumps())
print("beliefs left:", len(beliefs))
