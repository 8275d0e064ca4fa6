"""Least-squares periodogram for unevenly spaced reception times.

The reception series is turned into a sparse signal (1 at each reception,
0 interpolated into oversized gaps), scanned over a frequency grid with the
classic phase-shifted sinusoid fit, and the peak is gated by an analytic
upper bound on the false alarm probability of the maximum over the grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .types import as_times

DEFAULT_OVERSAMPLE = 8  # grid oversampling factor
DEFAULT_FREQ_HEADROOM = 2.0  # scan up to this multiple of the mean event rate
DEFAULT_GRID_CAP = 1_000_000
_CHUNK = 2048  # frequencies evaluated per block; fixed so sums are reproducible


@dataclass(frozen=True)
class FrequencyGrid:
    """Arithmetic frequency grid [f_min, f_min + step, ...] covering f_max."""

    f_min: float
    f_max: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")

    @property
    def size(self) -> int:
        return int(np.ceil((self.f_max - self.f_min) / self.step)) + 1

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_min + self.step * np.arange(self.size)


@dataclass
class Periodogram:
    grid: FrequencyGrid
    power: np.ndarray
    peak_frequency: float
    peak_power: float
    fap: float | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["frequency", "power"])
            for f, p in zip(self.grid.frequencies, self.power):
                writer.writerow([repr(float(f)), repr(float(p))])


def _fill_gaps(
    arr: np.ndarray, gaps: np.ndarray, eligible: np.ndarray, spacing: float, margin: float
) -> list[float]:
    zeros: list[float] = []
    for start, gap, ok in zip(arr[:-1], gaps, eligible):
        if not ok:
            continue
        pos = start + spacing
        limit = start + gap - margin
        while pos <= limit:
            zeros.append(pos)
            pos += spacing
    return zeros


def interpolate_zeros(
    times,
    gap_threshold: float = 1.0,
    edge_margin: float = 0.5,
    density_target: float = 0.5,
    densify_min_points: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Value-1 samples at receptions, zeros dropped into oversized gaps.

    Zeros go into every gap longer than ``gap_threshold`` mean gaps, spaced
    one mean gap apart and kept at least ``edge_margin`` spacings away from
    both endpoints, so short gaps never lend weight to high frequencies.

    The contrast of the resulting signal (and with it the attainable peak
    significance, roughly ones*zeros/samples) is limited by the zero count,
    so on series of at least ``densify_min_points`` receptions the fill is
    repeated at halved spacing over all at-least-mean-sized gaps until the
    zeros reach ``density_target`` times the reception count (or the spacing
    falls to an eighth of the mean gap).
    """
    arr = as_times(times)
    if len(arr) < 2:
        raise ValueError("insufficient samples: need at least 2 receptions")
    gaps = np.diff(arr)
    mean_gap = float(gaps.mean())
    if mean_gap <= 0:
        raise ValueError("degenerate series: zero time span")

    zeros = _fill_gaps(
        arr, gaps, gaps > gap_threshold * mean_gap, mean_gap, edge_margin * mean_gap
    )
    spacing = mean_gap
    if len(arr) >= densify_min_points:
        while len(zeros) < density_target * len(arr) and spacing > mean_gap / 8.0:
            spacing /= 2.0
            zeros = _fill_gaps(
                arr, gaps, gaps >= gap_threshold * mean_gap, spacing, edge_margin * spacing
            )
    elif not zeros:
        half = (arr[:-1] + arr[1:]) / 2.0
        zeros = list(half[gaps >= mean_gap])

    sample_times = np.concatenate([arr, np.asarray(zeros)])
    values = np.concatenate([np.ones(len(arr)), np.zeros(len(zeros))])
    order = np.argsort(sample_times, kind="stable")
    return sample_times[order], values[order]


def build_grid(
    times,
    oversample: int = DEFAULT_OVERSAMPLE,
    freq_headroom: float = DEFAULT_FREQ_HEADROOM,
    span_override: float | None = None,
    grid_cap: int = DEFAULT_GRID_CAP,
) -> FrequencyGrid:
    """Frequency grid implied by a reception series.

    The lowest frequency completes one oscillation over the whole span, the
    spacing oversamples that span, and the top frequency runs
    ``freq_headroom`` past the mean event rate so that loss-thinned trains
    (which look slower than they emit) stay inside the scan.
    """
    arr = as_times(times)
    if len(arr) < 2:
        raise ValueError("insufficient samples: need at least 2 receptions")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    if freq_headroom <= 0:
        raise ValueError("freq_headroom must be positive")
    span = float(arr[-1] - arr[0])
    if span <= 0:
        raise ValueError("degenerate series: zero time span")
    mean_gap = span / (len(arr) - 1)
    window = span if span_override is None else float(span_override)
    grid = FrequencyGrid(
        f_min=1.0 / span, f_max=freq_headroom / mean_gap, step=1.0 / (oversample * window)
    )
    if grid.size > grid_cap:
        raise ValueError(f"frequency grid of {grid.size} points exceeds cap {grid_cap}")
    return grid


def power_spectrum(sample_times, values, frequencies) -> np.ndarray:
    """Variance-normalized least-squares sinusoid power at given frequencies.

    Power Z at a frequency is the sinusoid fit's explained sum of squares
    over twice the sample variance, so pure Gaussian noise gives
    P(Z < z) ~ 1 - exp(-z) per frequency.
    """
    t = np.asarray(sample_times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) != len(y):
        raise ValueError("sample_times and values must have equal length")
    if len(t) < 3:
        raise ValueError("insufficient samples: need at least 3 points")
    centered = y - y.mean()
    variance = float(np.sum(centered**2)) / (len(y) - 1)
    if variance <= 0:
        raise ValueError("degenerate signal: values have zero variance")

    freqs = np.asarray(frequencies, dtype=float)
    power = np.empty(len(freqs))
    for lo in range(0, len(freqs), _CHUNK):
        omega = 2.0 * np.pi * freqs[lo : lo + _CHUNK, None]
        # phase shift that decouples the cosine and sine normal equations
        tau = np.arctan2(
            np.sin(2.0 * omega * t).sum(axis=1), np.cos(2.0 * omega * t).sum(axis=1)
        ) / (2.0 * omega[:, 0])
        phase = omega * (t[None, :] - tau[:, None])
        cos_p = np.cos(phase)
        sin_p = np.sin(phase)
        cos_proj = (centered * cos_p).sum(axis=1)
        sin_proj = (centered * sin_p).sum(axis=1)
        cos_norm = (cos_p**2).sum(axis=1)
        sin_norm = (sin_p**2).sum(axis=1)
        # guard the measure-zero alignments where one basis column vanishes
        tiny = 1e-12 * len(t)
        cos_term = np.where(cos_norm > tiny, cos_proj**2 / np.maximum(cos_norm, tiny), 0.0)
        sin_term = np.where(sin_norm > tiny, sin_proj**2 / np.maximum(sin_norm, tiny), 0.0)
        power[lo : lo + _CHUNK] = (cos_term + sin_term) / (2.0 * variance)
    return power


def lomb_scargle(sample_times, values, grid: FrequencyGrid) -> Periodogram:
    """Scan the grid with the least-squares periodogram and record the peak."""
    freqs = grid.frequencies
    power = power_spectrum(sample_times, values, freqs)
    peak = int(np.argmax(power))
    return Periodogram(
        grid=grid,
        power=power,
        peak_frequency=float(freqs[peak]),
        peak_power=float(power[peak]),
    )


def peak_false_alarm(peak_power: float, grid: FrequencyGrid, sample_times) -> float:
    """Upper bound on the chance pure noise tops the grid at this power.

    Single-frequency law 1 - exp(-Z) extended to the whole scan through the
    effective bandwidth W = f_max * sqrt(4 pi Var(t)): FAP = 1 - (1 -
    exp(-Z)) * exp(-W exp(-Z) sqrt(Z)), clamped into [0, 1].  Conservative
    (never understates), and decreasing in Z wherever it is informative.
    """
    if peak_power < 0:
        raise ValueError("peak_power must be non-negative")
    t = np.asarray(sample_times, dtype=float)
    bandwidth = grid.f_max * float(np.sqrt(4.0 * np.pi * t.var()))
    z = peak_power
    tail = np.exp(-z)
    single = 1.0 - tail  # chance one frequency stays below Z in pure noise
    fap = 1.0 - single * np.exp(-bandwidth * tail * np.sqrt(z))
    return float(min(max(fap, 0.0), 1.0))


def propose_period(
    pool,
    sigma: float = 0.01,
    oversample: int = DEFAULT_OVERSAMPLE,
    freq_headroom: float = DEFAULT_FREQ_HEADROOM,
    grid_cap: int = DEFAULT_GRID_CAP,
) -> float | None:
    """Full pipeline: interpolate, scan, gate; the peak period if significant.

    Returns None when the peak's false-alarm bound is not below sigma.
    """
    arr = as_times(pool)
    if len(arr) < 3:
        raise ValueError("insufficient samples: need at least 3 receptions")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    sample_times, values = interpolate_zeros(arr)
    grid = build_grid(arr, oversample=oversample, freq_headroom=freq_headroom, grid_cap=grid_cap)
    pgram = lomb_scargle(sample_times, values, grid)
    pgram.fap = peak_false_alarm(pgram.peak_power, grid, sample_times)
    if pgram.fap < sigma:
        return 1.0 / pgram.peak_frequency
    return None
