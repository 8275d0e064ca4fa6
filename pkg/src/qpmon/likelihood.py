"""Phase likelihood of a reception against a fitted app, and argmax labeling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import AppEstimate


@dataclass(frozen=True)
class LikelihoodScore:
    """Normalized phase fit in [0, 1] plus the raw cosine in [-1, 1]."""

    value: float
    raw_phase_fit: float


def raw_phase_fit(t, period: float, offset: float = 0.0):
    """Cosine of the phase distance from the nearest expected slot."""
    if period <= 0:
        raise ValueError("period must be positive")
    return np.cos((np.asarray(t, dtype=float) - offset) / period * 2.0 * np.pi)


def phase_likelihood(t: float, period: float, offset: float = 0.0) -> LikelihoodScore:
    """Likelihood that time t belongs to a train of the given period/offset.

    1.0 exactly on an expected slot, 0.0 exactly between two slots.  The
    affine rescaling of the cosine never changes any argmax over apps.
    """
    raw = float(raw_phase_fit(t, period, offset))
    return LikelihoodScore(value=(raw + 1.0) / 2.0, raw_phase_fit=raw)


def _score(t: float, app: AppEstimate) -> LikelihoodScore:
    if app.offset is not None:
        return phase_likelihood(t, app.period, app.offset)
    # offset unknown: score the distance to the app's latest reception instead
    return phase_likelihood(t - app.last_time, app.period, 0.0)


def classify_time(t: float, apps: list[AppEstimate]) -> int:
    """Index of the app whose expected schedule best matches time t.

    Ties go to the lowest index so repeated runs stay reproducible.
    """
    if not apps:
        raise ValueError("no apps to classify against")
    scores = [_score(t, app).value for app in apps]
    return int(np.argmax(scores))  # argmax returns the first (lowest) maximum
