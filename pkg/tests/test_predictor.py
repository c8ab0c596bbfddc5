from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aec.predictor import (AMBIGUOUS, CalibrationRecord, Prediction, SyntheticPredictor,
                           SyntheticPredictorConfig, discretize, expected_sigma, is_ambiguous,
                           predict, recalibrate, records_from_predictions)
from aec.store import GroundedStore

from conftest import A

P = A("in(o1,c1)")


class Truth:
    def __init__(self, value: bool):
        self.v = value

    def value(self, atom):
        return self.v


def _sample(cfg, n, seed=0):
    rng = np.random.default_rng(seed)
    truths = rng.random(n) < 0.5
    preds = [predict(GroundedStore(), P, Truth(bool(t)), cfg, rng) for t in truths]
    return truths, np.array([p.mu for p in preds]), np.array([p.sigma for p in preds])


# -- the synthetic model -----------------------------------------------------

@pytest.mark.parametrize("truth", [True, False])
def test_perfect_predictor(truth):
    cfg = SyntheticPredictorConfig(accuracy=1.0, noise_scale=0.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        pred = predict(GroundedStore(), P, Truth(truth), cfg, rng)
        assert pred.mu == float(truth) and pred.sigma == 0.0


def test_chance_predictor_is_uninformative():
    truths, mu, sigma = _sample(SyntheticPredictorConfig(accuracy=0.5), 10_000)
    assert abs(np.corrcoef(truths.astype(float), mu)[0, 1]) < 0.05
    assert sigma.mean() > 0.3


def test_single_member_never_disagrees():
    _, _, sigma = _sample(SyntheticPredictorConfig(accuracy=0.7, ensemble_size=1), 500)
    assert np.all(sigma == 0.0)


@pytest.mark.parametrize("accuracy, k, noise", [(0.7, 5, 0.5), (0.8, 3, 1.0), (0.6, 7, 2.0)])
def test_expected_sigma_matches_monte_carlo(accuracy, k, noise):
    cfg = SyntheticPredictorConfig(accuracy=accuracy, ensemble_size=k, noise_scale=noise)
    _, _, sigma = _sample(cfg, 20_000, seed=3)
    se = sigma.std() / np.sqrt(sigma.size)
    assert abs(sigma.mean() - expected_sigma(accuracy, k, noise)) < 4 * se


def test_majority_accuracy_tracks_config():
    truths, mu, _ = _sample(SyntheticPredictorConfig(accuracy=0.8, noise_scale=0.01), 10_000)
    acc = np.mean((mu >= 0.5) == truths)
    assert abs(acc - 0.8) < 0.015


@given(st.floats(0.5, 0.99), st.floats(0.01, 4.0), st.floats(1.05, 3.0))
def test_sigma_grows_with_noise(accuracy, s, factor):
    assert expected_sigma(accuracy, 5, s * factor) >= expected_sigma(accuracy, 5, s) - 1e-9


def test_predictor_only_takes_grounded_store():
    pred = SyntheticPredictor(SyntheticPredictorConfig(), Truth(True), np.random.default_rng(0))
    with pytest.raises(TypeError):
        pred.predict({P: True}, A("cold(o1)"))
    pred.predict(GroundedStore.from_values({A("open(c1)"): True}), P)
    assert pred.inputs == [(P, frozenset({A("open(c1)")}))]
    with pytest.raises(ValueError):
        pred.predict(GroundedStore.from_values({P: True}), P)


@pytest.mark.parametrize("kwargs", [{"accuracy": 0.4}, {"ensemble_size": 0},
                                    {"noise_scale": -1.0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticPredictorConfig(**kwargs)


# -- ambiguity margin --------------------------------------------------------

@pytest.mark.parametrize("mu, eps, expected", [
    (0.9, 0.05, True),
    (0.52, 0.05, AMBIGUOUS),
    (0.5, 0.01, AMBIGUOUS),
    (0.55, 0.05, True),
    (0.45, 0.05, False),
    (0.1, 0.0, False),
    (0.5, 0.0, True),
])
def test_discretize(mu, eps, expected):
    assert discretize(Prediction(mu, 0.0), eps) is expected


@given(st.floats(0.0, 1.0), st.floats(0.0, 0.5))
def test_discretize_is_total(mu, eps):
    out = discretize(Prediction(mu, 0.0), eps)
    assert out is AMBIGUOUS or out is (mu >= 0.5)
    assert (out is AMBIGUOUS) == is_ambiguous(mu, eps)


@given(st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_abstention_monotone_in_epsilon(mu, e1, e2):
    lo, hi = sorted((e1, e2))
    if is_ambiguous(mu, lo):
        assert is_ambiguous(mu, hi)


def test_discretize_rejects_bad_margin():
    with pytest.raises(ValueError):
        discretize(Prediction(0.7, 0.1), 0.6)
    with pytest.raises(ValueError):
        Prediction(1.2, 0.0)


# -- recalibration -----------------------------------------------------------

def test_empty_records_leave_config_unchanged():
    cfg = SyntheticPredictorConfig(noise_scale=0.3)
    assert recalibrate(cfg, []) == cfg


def test_overconfident_errors_raise_sigma():
    cfg = SyntheticPredictorConfig(accuracy=0.7, noise_scale=0.05)
    records = [CalibrationRecord(P, True, i % 3 != 0, 0.0) for i in range(300)]
    new = recalibrate(cfg, records)
    assert new.noise_scale > cfg.noise_scale
    _, _, before = _sample(cfg, 5000, seed=9)
    _, _, after = _sample(new, 5000, seed=9)
    assert after.mean() > before.mean()
    # The new mean sigma covers the observed shortfall.
    shortfall = 100 / 300
    assert expected_sigma(0.7, 5, new.noise_scale) == pytest.approx(
        expected_sigma(0.7, 5, 0.05) + shortfall, abs=1e-6)


def test_calibrated_records_are_a_fixed_point():
    cfg = SyntheticPredictorConfig(accuracy=0.8, noise_scale=0.7)
    records = [CalibrationRecord(P, True, i % 5 != 0, 0.2) for i in range(500)]
    new = recalibrate(cfg, records)
    assert abs(new.noise_scale - cfg.noise_scale) < 1e-6


def test_records_from_predictions_pairs_grounded_only():
    final = GroundedStore.from_values({P: False})
    recs = records_from_predictions([(P, True, 0.1), (A("cold(o1)"), True, 0.0)], final)
    assert recs == [CalibrationRecord(P, True, False, 0.1)]


@pytest.mark.parametrize("accuracy", [0.6, 0.75, 0.9])
def test_error_rate_at_zero_noise(accuracy):
    """Identical members: the majority is wrong exactly when the latent is."""
    truths, mu, _ = _sample(SyntheticPredictorConfig(accuracy=accuracy, noise_scale=0.0),
                            10_000, seed=21)
    err = np.mean((mu >= 0.5) != truths)
    assert abs(err - (1 - accuracy)) < 0.02


def test_sigma_falls_with_accuracy():
    grid = [0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
    exact = [expected_sigma(a, 5, 1.0) for a in grid]
    assert all(b <= a for a, b in zip(exact, exact[1:]))
    lo = _sample(SyntheticPredictorConfig(accuracy=0.6), 10_000, seed=1)[2]
    hi = _sample(SyntheticPredictorConfig(accuracy=0.95), 10_000, seed=2)[2]
    se = np.hypot(lo.std(), hi.std()) / 100
    assert lo.mean() - hi.mean() > 3 * se
