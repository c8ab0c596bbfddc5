"""Uncertainty-gated planning with grounded-only plan commitment.

The controller keeps externally supported facts apart from model beliefs,
decides per predicate whether to query the environment or accept a
prediction, and commits to a plan only when a verifier passes it on
grounded facts alone.
"""

from .controller import ControllerConfig, EpisodeOutcome, Mode, run_episode
from .domain import DomainSchema, GoalConstraints, GroundAction, entails, parse_schema
from .environment import (EnvInstanceConfig, Environment, HiddenWorld, OracleConfig,
                          household_schema, micro_schema, sample_world)
from .hypotheses import Hypothesis, filter_hypotheses, generate_hypotheses
from .predictor import SyntheticPredictor, SyntheticPredictorConfig, discretize
from .store import Atom, BeliefStore, GroundedStore
from .verifier import Verdict, brute_force_feasible, verify

__version__ = "0.1.0"

__all__ = [
    "Atom", "BeliefStore", "ControllerConfig", "DomainSchema", "EnvInstanceConfig",
    "Environment", "EpisodeOutcome", "GoalConstraints", "GroundAction", "GroundedStore",
    "HiddenWorld", "Hypothesis", "Mode", "OracleConfig", "SyntheticPredictor",
    "SyntheticPredictorConfig", "Verdict", "brute_force_feasible", "discretize", "entails",
    "filter_hypotheses", "generate_hypotheses", "household_schema", "micro_schema",
    "parse_schema", "run_episode", "sample_world", "verify",
]
