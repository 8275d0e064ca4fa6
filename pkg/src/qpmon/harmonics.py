"""Period regression for a single labeled reception series.

The observed gap between consecutive receptions is an integer number of
emission periods (its harmonic order) plus jitter.  Starting from the plain
mean gap, the fit alternates two cheap steps until the period stabilizes:
round each gap to its nearest harmonic order, then average the gaps
normalized by those orders.  Losses fall out for free: a gap of order h hides
h - 1 dropped transmissions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import AppEstimate, as_times


@dataclass(frozen=True)
class FitConfig:
    """Convergence knobs for the iterative period fit."""

    tol: float = 1e-9  # relative period change considered converged
    max_iterations: int = 100

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


DEFAULT_FIT = FitConfig()


def initial_period(gaps: np.ndarray) -> float:
    """First period hypothesis: the plain mean gap."""
    gaps = np.asarray(gaps, dtype=float)
    if len(gaps) == 0:
        raise ValueError("insufficient samples: need at least one gap")
    return float(gaps.mean())


def harmonic_orders(gaps: np.ndarray, period: float) -> np.ndarray:
    """Nearest-integer multiple of the period per gap, clamped to >= 1.

    Rounds half away from zero; an order of 0 would mean two receptions of
    the same transmission, which the jitter bound rules out.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    orders = np.floor(np.asarray(gaps, dtype=float) / period + 0.5).astype(int)
    return np.maximum(orders, 1)


def refine_period(gaps: np.ndarray, orders: np.ndarray) -> float:
    """Mean gap after normalizing each gap by its harmonic order."""
    gaps = np.asarray(gaps, dtype=float)
    orders = np.asarray(orders, dtype=int)
    if len(gaps) != len(orders):
        raise ValueError("need one harmonic order per gap")
    if len(orders) and orders.min() < 1:
        raise ValueError("harmonic orders must be >= 1")
    return float((gaps / orders).mean())


def _iterate(gaps: np.ndarray, period: float, config: FitConfig) -> tuple[float, np.ndarray, bool]:
    converged = False
    orders = harmonic_orders(gaps, period)
    for _ in range(config.max_iterations):
        updated = refine_period(gaps, orders)
        if abs(updated - period) / period < config.tol:
            period = updated
            converged = True
            break
        period = updated
        orders = harmonic_orders(gaps, period)
    # A warm start can settle on a divisor of the true period, where every
    # order shares a common factor.  Collapse to the minimal-loss reading,
    # which is also the fixed point a mean-gap start would have reached.
    orders = harmonic_orders(gaps, period)
    common = int(np.gcd.reduce(orders)) if len(orders) else 1
    if common > 1:
        return _iterate(gaps, period * common, config)
    return period, orders, converged


def _fit_offset(times: np.ndarray, period: float, orders: np.ndarray) -> float:
    """Offset as the mean phase residual against cumulative transmission indices."""
    indices = np.concatenate(([0], np.cumsum(orders)))
    return float((times - period * indices).mean())


def fit_series(times, config: FitConfig = DEFAULT_FIT) -> AppEstimate:
    """Fit period, harmonic orders and offset to a labeled series.

    Needs at least 3 receptions (two gaps).  If the iteration hits the
    iteration cap the best estimate is returned with ``converged=False``.
    """
    arr = as_times(times)
    arr = arr[np.concatenate(([True], np.diff(arr) > 0))]  # collapse duplicates
    if len(arr) < 3:
        raise ValueError("insufficient samples: need at least 3 receptions")
    gaps = np.diff(arr)
    period, orders, converged = _iterate(gaps, initial_period(gaps), DEFAULT_FIT if config is None else config)
    offset = _fit_offset(arr, period, orders)
    return AppEstimate(
        period=period, times=arr, harmonics=orders, offset=offset, converged=converged
    )


def extend_fit(app: AppEstimate, new_time: float, config: FitConfig = DEFAULT_FIT) -> AppEstimate:
    """Fold one new reception into an existing fit, warm-starting the iteration."""
    if new_time < app.last_time:
        raise ValueError("new_time precedes the app's last reception")
    if new_time == app.last_time:
        return app
    times = np.append(app.times, float(new_time))
    gaps = np.diff(times)
    period, orders, converged = _iterate(gaps, app.period, config)
    offset = _fit_offset(times, period, orders)
    return AppEstimate(
        period=period,
        times=times,
        harmonics=orders,
        offset=offset,
        label=app.label,
        converged=converged,
    )


def app_outage(app: AppEstimate) -> float:
    """Full-history loss ratio implied by the fitted harmonic orders."""
    transmitted = app.total_transmissions()
    return app.total_losses() / transmitted if transmitted else 0.0


def combined_outage(apps: list[AppEstimate]) -> float:
    """Loss ratio pooled across several fitted apps."""
    lost = sum(app.total_losses() for app in apps)
    transmitted = sum(app.total_transmissions() for app in apps)
    return lost / transmitted if transmitted else 0.0
