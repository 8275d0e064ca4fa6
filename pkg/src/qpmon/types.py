"""Core domain types and the loss/offline KPIs computed from fitted apps.

Time is an abstract non-negative float axis; the simulator works in unitless
time and the log ingester maps wall clocks onto seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Timestamp = float


@dataclass(frozen=True)
class ReceptionRecord:
    """One received transmission as seen by a gateway or the central server."""

    device_id: str
    time: Timestamp
    gateway_id: str | None = None
    payload_size: int = 0
    app_label: int | None = None

    def __post_init__(self):
        if not self.device_id:
            raise ValueError("device_id must be non-empty")
        if not np.isfinite(self.time) or self.time < 0:
            raise ValueError(f"invalid reception time {self.time!r}")
        if self.payload_size < 0:
            raise ValueError("payload_size must be non-negative")


@dataclass
class ReceptionSeries:
    """Chronologically sorted reception times of one device or one app."""

    times: np.ndarray
    owner: str = ""
    label: int | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be sorted ascending")

    def __len__(self) -> int:
        return len(self.times)

    def gaps(self) -> "GapSeries":
        """Distances between consecutive distinct times (duplicates collapsed)."""
        distinct = self.times[np.concatenate(([True], np.diff(self.times) > 0))]
        return GapSeries(np.diff(distinct))


def as_times(series) -> np.ndarray:
    """Coerce a ReceptionSeries or any sequence of floats to a sorted array."""
    if isinstance(series, ReceptionSeries):
        return series.times
    times = np.asarray(series, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    return times


@dataclass
class GapSeries:
    """Positive inter-reception distances of one series."""

    gaps: np.ndarray

    def __post_init__(self):
        self.gaps = np.asarray(self.gaps, dtype=float)
        if len(self.gaps) and np.min(self.gaps) <= 0:
            raise ValueError("gaps must be strictly positive")

    def __len__(self) -> int:
        return len(self.gaps)


@dataclass
class AppEstimate:
    """A fitted quasi-periodic application.

    ``harmonics[m]`` is the inferred number of emission periods spanned by gap
    m; ``harmonics[m] - 1`` of those transmissions were lost.  The first
    reception anchors the series and carries no loss bookkeeping of its own.
    """

    period: float
    times: np.ndarray
    harmonics: np.ndarray
    offset: float | None = None
    label: int | None = None
    converged: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.harmonics = np.asarray(self.harmonics, dtype=int)
        if self.period <= 0:
            raise ValueError("period must be positive")
        if len(self.harmonics) != max(len(self.times) - 1, 0):
            raise ValueError("need one harmonic order per gap")
        if len(self.harmonics) and self.harmonics.min() < 1:
            raise ValueError("harmonic orders must be >= 1")

    @property
    def losses(self) -> np.ndarray:
        """Lost-transmission count attributed to each gap."""
        return self.harmonics - 1

    @property
    def last_time(self) -> float:
        return float(self.times[-1])

    def total_losses(self) -> int:
        return int(self.losses.sum())

    def total_transmissions(self) -> int:
        """Transmissions inferred across all gaps (excludes the anchor)."""
        return int(self.harmonics.sum())


@dataclass
class KpiReport:
    """Windowed health summary for one device."""

    outage_estimate: float
    window: float
    offline_apps: set = field(default_factory=set)
    device_offline: bool = False
    received_count: int = 0
    inferred_transmitted_count: int = 0
    flag: str = "ok"  # "ok" | "no_model" | "no_data"

    def __post_init__(self):
        if not 0.0 <= self.outage_estimate <= 1.0:
            raise ValueError("outage_estimate must lie in [0, 1]")
        if self.received_count > self.inferred_transmitted_count:
            raise ValueError("received cannot exceed inferred transmissions")


def outage_counts(app: AppEstimate, t: Timestamp, window: float) -> tuple[int, int]:
    """(received, transmitted) attributed to the window ``[t - window, t]``.

    A gap's losses belong to the window containing the reception that closes
    it, so each in-window gap contributes its full harmonic order to the
    transmitted count (one received plus ``harmonics - 1`` lost).
    """
    if window <= 0:
        raise ValueError("window must be positive")
    closing = app.times[1:]
    in_window = (closing >= t - window) & (closing <= t)
    transmitted = int(app.harmonics[in_window].sum())
    received = int(in_window.sum())
    return received, transmitted


def outage_estimate(apps: list[AppEstimate], t: Timestamp, window: float) -> float:
    """Lost/transmitted ratio over all apps within ``[t - window, t]``.

    Returns 0.0 when no transmissions are inferred in the window (including
    the empty-app-list case).
    """
    lost = 0
    transmitted = 0
    for app in apps:
        received, sent = outage_counts(app, t, window)
        lost += sent - received
        transmitted += sent
    if transmitted == 0:
        return 0.0
    return lost / transmitted


def is_offline(app: AppEstimate, t_now: Timestamp, k: int) -> bool:
    """True when at least k consecutive expected transmissions are missing."""
    if t_now < app.last_time:
        raise ValueError("t_now precedes the app's last reception")
    return int(np.floor((t_now - app.last_time) / app.period)) >= k


def naive_estimate(
    times, t: Timestamp, window: float, m_max: int = 0
) -> tuple[float, int]:
    """Window-count outage proxy that needs no traffic model.

    Counts receptions in ``(t - window, t]``, tracks the historical maximum
    count, and reports the relative shortfall.  Returns the estimate and the
    updated (monotone) maximum.
    """
    arr = as_times(times)
    m_obs = int(np.count_nonzero((arr > t - window) & (arr <= t)))
    m_max = max(m_max, m_obs)
    if m_max == 0:
        return 0.0, m_max
    return (m_max - m_obs) / m_max, m_max


def naive_batch_estimate(times, t: Timestamp, window: float) -> float:
    """Naive estimate at time t with the maximum taken over the whole history.

    The historical maximum is the densest window ending at any reception time
    not later than t (sliding the window further can only lower the count).
    """
    arr = as_times(times)
    m_max = 0
    for end in arr[arr <= t]:
        m_obs = int(np.count_nonzero((arr > end - window) & (arr <= end)))
        m_max = max(m_max, m_obs)
    estimate, _ = naive_estimate(arr, t, window, m_max)
    return estimate


def naive_is_offline(estimate: float, epsilon: float) -> bool:
    """Offline under the naive rule: shortfall strictly above epsilon."""
    if not 0.0 <= estimate <= 1.0:
        raise ValueError("estimate must lie in [0, 1]")
    return estimate > epsilon
