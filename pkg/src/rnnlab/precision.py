"""Machine-precision model: resolution bounds on a bounded hidden state,
sigmoid saturation thresholds, maximum distinguishable count, and the
saturation predictor for the LSTM final state on a^n b^n inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS32 = float(np.finfo(np.float32).eps)  # ~1.19e-7
EPS64 = float(np.finfo(np.float64).eps)  # ~2.22e-16
# the preset value quoted in the estimation methodology
EPS32_PRESET = 1.19e-7


@dataclass(frozen=True)
class PrecisionParams:
    epsilon: float = EPS32
    noticeable_factor: float = 10.0
    dynamic_range: tuple = (-0.9, 0.9)
    conservative_factor: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        low, high = self.dynamic_range
        if not low < high:
            raise ValueError("dynamic range must have low < high")
        if not 0 < self.conservative_factor <= 1:
            raise ValueError("conservative factor must be in (0, 1]")


@dataclass(frozen=True)
class PrecisionReport:
    delta_h_min: float
    steps: float
    n_max: float
    saturation_z: float

    def as_dict(self):
        return {"delta_h_min": self.delta_h_min, "steps": self.steps,
                "n_max": self.n_max, "saturation_z": self.saturation_z}


def estimate_nmax(p: PrecisionParams) -> PrecisionReport:
    """delta_h_min = factor*eps; steps = range/delta_h_min;
    n_max = f*steps; saturation_z = ln(1/eps)."""
    low, high = p.dynamic_range
    delta = p.noticeable_factor * p.epsilon
    steps = (high - low) / delta
    return PrecisionReport(
        delta_h_min=delta,
        steps=steps,
        n_max=p.conservative_factor * steps,
        saturation_z=math.log(1.0 / p.epsilon),
    )


def saturation_threshold(epsilon: float) -> float:
    """z beyond which |sigmoid(z) - 1| < epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return math.log(1.0 / epsilon)


def predict_lstm_saturation(xi_plus: float, xi_minus: float, n: int):
    """Maximum final (cell, hidden) state after n balanced a/b pairs when
    the candidate activation sits at its outer fixed points:
    c = n*(xi+ + xi-), h = tanh(c)."""
    if not xi_minus < xi_plus:
        raise ValueError("need xi_minus < xi_plus")
    c = n * (xi_plus + xi_minus)
    return c, math.tanh(c)


_COLLAPSE_CAP = 10_000_000
_CHUNK = 100_000


def collapse_count(xi_plus: float, xi_minus: float,
                   epsilon_layer: float) -> int | None:
    """Smallest balanced prefix count alpha at which consecutive hidden
    states become epsilon-indistinguishable:
    |tanh(a*xi+ + a*xi-) - tanh(a*xi+ + (a+1)*xi-)| < epsilon_layer.
    None if no collapse up to the scan cap."""
    if epsilon_layer <= 0:
        raise ValueError("epsilon_layer must be positive")
    s = xi_plus + xi_minus
    for start in range(1, _COLLAPSE_CAP + 1, _CHUNK):
        alpha = np.arange(start, min(start + _CHUNK, _COLLAPSE_CAP + 1),
                          dtype=np.float64)
        diff = np.abs(np.tanh(alpha * s) - np.tanh(alpha * s + xi_minus))
        hit = np.nonzero(diff < epsilon_layer)[0]
        if hit.size:
            return int(alpha[hit[0]])
    return None
