"""World-model interface and a synthetic truth-biased ensemble predictor.

Each call draws a shared logistic latent ``xi`` (how hard this predicate is
to guess) and per-member Gaussian jitter ``zeta_i``. Member ``i`` votes for
the hidden truth iff ``xi + noise_scale * zeta_i < logit(accuracy)``; with no
jitter every member agrees and the ensemble is right with probability
``accuracy`` exactly. ``mu`` is the fraction of members voting true and
``sigma = 4 mu (1 - mu)``, the vote variance scaled to ``[0, 1]``.

The hidden world is consulted only to decide which way a correct vote points.
The controller never sees it.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Protocol

import numpy as np
from scipy import integrate, optimize, special

from .store import Atom, GroundedStore

__all__ = [
    "AMBIGUOUS", "Ambiguous", "CalibrationRecord", "Prediction", "Predictor",
    "SyntheticPredictor", "SyntheticPredictorConfig", "discretize",
    "expected_sigma", "is_ambiguous", "predict", "recalibrate", "records_from_predictions",
]

# Predictions are fractions k/K; this absorbs float error at the margin.
_MARGIN_TOL = 1e-9


@dataclass(frozen=True)
class Prediction:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0 and 0.0 <= self.sigma <= 1.0):
            raise ValueError(f"prediction out of range: mu={self.mu}, sigma={self.sigma}")


class Ambiguous(Enum):
    AMBIGUOUS = "ambiguous"

    def __repr__(self) -> str:
        return "AMBIGUOUS"


AMBIGUOUS = Ambiguous.AMBIGUOUS


def is_ambiguous(mu: float, epsilon: float) -> bool:
    """``|mu - 0.5| < epsilon``; the margin itself is not ambiguous."""
    return abs(mu - 0.5) < epsilon - _MARGIN_TOL


def discretize(pred: Prediction, epsilon: float) -> bool | Ambiguous:
    """``1[mu >= 0.5]`` when ``mu`` clears the margin, else :data:`AMBIGUOUS`."""
    if not 0.0 <= epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in [0, 0.5], got {epsilon}")
    if is_ambiguous(pred.mu, epsilon):
        return AMBIGUOUS
    return pred.mu >= 0.5


@dataclass(frozen=True)
class SyntheticPredictorConfig:
    accuracy: float = 0.8
    ensemble_size: int = 5
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0.5, 1], got {self.accuracy}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be at least 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")

    @property
    def threshold(self) -> float:
        return float(special.logit(self.accuracy)) if self.accuracy < 1 else math.inf


class HiddenTruth(Protocol):
    def value(self, atom: Atom) -> bool: ...


class Predictor(Protocol):
    """``M(w, p) -> (mu, sigma)``. Takes grounded facts and nothing else."""

    def predict(self, grounded: GroundedStore, p: Atom) -> Prediction: ...


def predict(grounded: GroundedStore, p: Atom, hidden: HiddenTruth,
            config: SyntheticPredictorConfig, rng: np.random.Generator) -> Prediction:
    """One ensemble prediction for ``p``.

    ``grounded`` is accepted for interface fidelity; the synthetic model's
    signal comes from the truth-biased votes.
    """
    if p in grounded:
        raise ValueError(f"{p} is already grounded; there is nothing to predict")
    truth = bool(hidden.value(p))
    xi = rng.logistic()
    zeta = rng.standard_normal(config.ensemble_size)
    correct = xi + config.noise_scale * zeta < config.threshold
    votes_true = np.where(correct, truth, not truth)
    mu = float(votes_true.mean())
    return Prediction(mu, 4.0 * mu * (1.0 - mu))


class SyntheticPredictor:
    """Per-episode predictor bound to one hidden world and random stream.

    Every call's input (the grounded domain) is appended to :attr:`inputs`
    so the harness can audit what the model was conditioned on.
    """

    def __init__(self, config: SyntheticPredictorConfig, hidden: HiddenTruth,
                 rng: np.random.Generator,
                 on_call: Callable[[GroundedStore, Atom], None] | None = None):
        self.config = config
        self._hidden = hidden
        self._rng = rng
        self._on_call = on_call
        self.inputs: list[tuple[Atom, frozenset[Atom]]] = []

    def predict(self, grounded: GroundedStore, p: Atom) -> Prediction:
        if not isinstance(grounded, GroundedStore):
            raise TypeError("the predictor only accepts a GroundedStore")
        self.inputs.append((p, grounded.domain))
        if self._on_call is not None:
            self._on_call(grounded, p)
        return predict(grounded, p, self._hidden, self.config, self._rng)


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------

class CalibrationRecord(NamedTuple):
    atom: Atom
    predicted: bool
    actual: bool
    sigma: float


def expected_sigma(accuracy: float, ensemble_size: int, noise_scale: float) -> float:
    """Mean ``sigma`` of the synthetic model, by quadrature over the latent.

    Given ``xi`` each member is correct with probability
    ``c = Phi((t - xi) / s)``, so ``E[sigma | xi] = 4 (1 - 1/K) c (1 - c)``.
    """
    k = ensemble_size
    if k == 1 or noise_scale == 0 or accuracy >= 1:
        return 0.0
    t = float(special.logit(accuracy))

    def integrand(xi: float) -> float:
        c = special.ndtr((t - xi) / noise_scale)
        e = math.exp(-abs(xi))
        return c * (1.0 - c) * e / (1.0 + e) ** 2

    val, _ = integrate.quad(integrand, -np.inf, np.inf, limit=200)
    return 4.0 * (1.0 - 1.0 / k) * val


def recalibrate(config: SyntheticPredictorConfig, records: Iterable[CalibrationRecord], *,
                tol: float = 1e-6, max_noise: float = 1e3) -> SyntheticPredictorConfig:
    """Raise ``noise_scale`` until mean sigma covers the observed error rate.

    The target is the model's mean sigma shifted by the shortfall between the
    empirical error rate on ``records`` and their mean reported sigma. When
    sigma already covers the error rate (within ``tol``) the config is
    returned unchanged.
    """
    records = list(records)
    if not records:
        return config
    err = sum(r.predicted != r.actual for r in records) / len(records)
    mean_sigma = sum(r.sigma for r in records) / len(records)
    shortfall = err - mean_sigma
    if shortfall <= tol or config.ensemble_size == 1 or config.accuracy >= 1:
        return config
    k = config.ensemble_size
    current = expected_sigma(config.accuracy, k, config.noise_scale)
    ceiling = 1.0 - 1.0 / k
    target = min(current + shortfall, ceiling - 1e-6)
    if target <= current + tol:
        return config

    def gap(s: float) -> float:
        return expected_sigma(config.accuracy, k, s) - target

    lo = config.noise_scale
    hi = max(2 * lo, 1.0)
    while gap(hi) < 0 and hi < max_noise:
        hi *= 2
    if gap(hi) < 0:
        return replace(config, noise_scale=hi)
    s_new = optimize.brentq(gap, lo, hi, xtol=1e-10)
    return replace(config, noise_scale=float(s_new))


def records_from_predictions(predictions: Sequence[tuple[Atom, bool, float]],
                             final: GroundedStore) -> list[CalibrationRecord]:
    """Pair simulated values with the grounded value they were later checked against."""
    return [CalibrationRecord(p, v, final[p], s) for p, v, s in predictions if p in final]
