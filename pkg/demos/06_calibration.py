"""The synthetic ensemble: accuracy, uncertainty and recalibration.

Members share a logistic latent and add their own Gaussian jitter, so they
tend to be wrong together. ``noise_scale`` sets how much they disagree.

Run: python3 demos/06_calibration.py
"""

from __future__ import annotations

import numpy as np

from aec.predictor import (CalibrationRecord, SyntheticPredictorConfig, expected_sigma,
                           predict, recalibrate)
from aec.store import Atom, GroundedStore


class Const:
    def value(self, atom):
        return True


p = Atom.parse("in(o1,c1)")
rng = np.random.default_rng(0)
print(f"{'accuracy':>8}{'noise':>7}{'majority acc':>14}{'mean sigma':>12}{'quadrature':>12}")
for acc in (0.6, 0.8):
    for s in (0.05, 0.5, 2.0):
        cfg = SyntheticPredictorConfig(accuracy=acc, noise_scale=s)
        preds = [predict(GroundedStore(), p, Const(), cfg, rng) for _ in range(5000)]
        mu = np.array([x.mu for x in preds])
        sigma = np.array([x.sigma for x in preds])
        print(f"{acc:>8}{s:>7}{np.mean(mu >= 0.5):>14.3f}{sigma.mean():>12.3f}"
              f"{expected_sigma(acc, 5, s):>12.3f}")

# An overconfident predictor: 30% wrong but sigma near zero.
cfg = SyntheticPredictorConfig(accuracy=0.7, noise_scale=0.05)
records = [CalibrationRecord(p, True, bool(u > 0.3), 0.01) for u in rng.random(1000)]
new = recalibrate(cfg, records)
print(f"recalibrated noise scale {cfg.noise_scale} -> {new.noise_scale:.3f}; "
      f"mean sigma {expected_sigma(0.7, 5, 0.05):.3f} -> {expected_sigma(0.7, 5, new.noise_scale):.3f}")
