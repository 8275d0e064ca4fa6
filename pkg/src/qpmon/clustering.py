"""Unsupervised extraction of periodic apps from unlabeled reception pools.

Batch mode repeatedly proposes a period from the pool's periodogram, marks
receptions whose pairwise phase fit passes a coarse threshold, removes
colliding marks, refines the survivors with the harmonic period fit and
peels them off the pool.  Streaming mode greedily attaches each new
reception to the best-fitting known app and falls back to the batch
extractor on the unlabeled pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .harmonics import DEFAULT_FIT, FitConfig, extend_fit, fit_series
from .likelihood import raw_phase_fit
from .periodogram import (
    DEFAULT_FREQ_HEADROOM,
    DEFAULT_GRID_CAP,
    DEFAULT_OVERSAMPLE,
    build_grid,
    interpolate_zeros,
    lomb_scargle,
    peak_false_alarm,
    power_spectrum,
)
from .types import AppEstimate, KpiReport, as_times, is_offline, outage_counts

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ClusterConfig:
    """Knobs shared by the batch and streaming cluster engines."""

    psi: int = 10  # minimum member count for an accepted app (and pool gate)
    sigma: float = 0.05  # false-alarm gate on periodogram peaks
    oversample: int = DEFAULT_OVERSAMPLE
    freq_headroom: float = DEFAULT_FREQ_HEADROOM
    k_offline: int = 3  # consecutive missed transmissions before offline
    grid_cap: int = DEFAULT_GRID_CAP
    assignment: str = "raw_cosine"  # or "likelihood"
    likelihood_threshold: float = 0.5  # gate when assignment == "likelihood"
    fit: FitConfig = DEFAULT_FIT

    def __post_init__(self):
        if self.psi < 2:
            raise ValueError("psi must be >= 2")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if self.k_offline < 1:
            raise ValueError("k_offline must be >= 1")
        if self.assignment not in ("raw_cosine", "likelihood"):
            raise ValueError("assignment must be 'raw_cosine' or 'likelihood'")


def pairwise_fit_scores(pool, period: float) -> np.ndarray:
    """Phase fit of every reception against every other at the given period.

    Score m sums the normalized phase likelihood of all pairwise time
    differences involving reception m (self included, contributing 1).
    """
    arr = as_times(pool)
    if len(arr) < 2:
        raise ValueError("need at least 2 receptions")
    if period <= 0:
        raise ValueError("period must be positive")
    diffs = arr[:, None] - arr[None, :]
    likelihood = (np.cos(diffs / period * 2.0 * np.pi) + 1.0) / 2.0
    return likelihood.sum(axis=1)


def mark_candidates(pool, scores: np.ndarray) -> np.ndarray:
    """Indices whose fit score beats half the mean score, in time order."""
    arr = as_times(pool)
    scores = np.asarray(scores, dtype=float)
    if len(arr) != len(scores):
        raise ValueError("one score per reception required")
    if len(arr) == 0:
        return np.zeros(0, dtype=int)
    threshold = scores.sum() / (2.0 * len(scores))
    return np.nonzero(scores > threshold)[0]


def drop_collisions(times: np.ndarray, period: float, scores: np.ndarray) -> np.ndarray:
    """Resolve marks closer than half a period, keeping the better fit.

    Scans adjacent pairs left to right, dropping the lower-scored member of
    each colliding pair (the later one on ties) and re-checking the new
    adjacency before moving on.  Returns indices into ``times`` that survive.
    """
    order = np.arange(len(times))
    keep = list(order)
    i = 0
    while i < len(keep) - 1:
        left, right = keep[i], keep[i + 1]
        if times[right] - times[left] < period / 2.0:
            if scores[left] < scores[right]:
                del keep[i]
                i = max(i - 1, 0)
            else:
                del keep[i + 1]
        else:
            i += 1
    return np.asarray(keep, dtype=int)


def _zoomed_peak(sample_times, values, freq: float, step: float) -> tuple[float, float]:
    """Refine a peak on a fine local grid (coarse grid error would otherwise
    dephase the fit scores over long spans)."""
    local = freq + np.linspace(-2.0 * step, 2.0 * step, 81)
    local = local[local > 0]
    power = power_spectrum(sample_times, values, local)
    best = int(np.argmax(power))
    return float(local[best]), float(power[best])


def _propose_from_pool(pool: np.ndarray, config: ClusterConfig) -> float | None:
    """Periodogram hypothesis restricted to periods the psi gate could accept.

    An accepted app needs more than psi members spaced at least half a period
    apart, so periods beyond 2 * span / (psi - 1) are unreachable and their
    band (where slow envelope artifacts live) is excluded from the scan.
    The winning peak is refined on a fine local grid, and because a spike
    train carries equal power at every odd harmonic, the hypothesis is lifted
    to the slowest subharmonic whose power is comparable to the peak's.
    """
    span = float(pool[-1] - pool[0])
    if span <= 0:
        return None
    floor = (config.psi - 1) / (2.0 * span)
    max_period = 2.0 * span / (config.psi - 1)
    sample_times, values = interpolate_zeros(pool)
    grid = build_grid(
        pool,
        oversample=config.oversample,
        freq_headroom=config.freq_headroom,
        grid_cap=config.grid_cap,
    )
    if grid.f_max <= floor:
        return None
    if floor > grid.f_min:
        grid = replace(grid, f_min=floor)
    try:
        pgram = lomb_scargle(sample_times, values, grid)
    except ValueError:
        return None  # degenerate pool carries no spectral information
    pgram.fap = peak_false_alarm(pgram.peak_power, grid, sample_times)
    if pgram.fap >= config.sigma:
        return None

    freq, peak_power = _zoomed_peak(
        sample_times, values, pgram.peak_frequency, grid.step
    )
    period = 1.0 / freq
    for multiple in range(6, 1, -1):
        candidate = period * multiple
        if candidate > max_period:
            continue
        sub_freq, power = _zoomed_peak(
            sample_times, values, 1.0 / candidate, grid.step / multiple
        )
        if power >= 0.5 * peak_power:
            return 1.0 / sub_freq
    return period


def _label_pool(pool: np.ndarray, period: float) -> np.ndarray:
    """Mark coarse fits and resolve collisions; indices of the labeled subset."""
    scores = pairwise_fit_scores(pool, period)
    marked = mark_candidates(pool, scores)
    return marked[drop_collisions(pool[marked], period, scores[marked])]


def cluster_pool(
    pool, config: ClusterConfig
) -> tuple[list[AppEstimate], np.ndarray]:
    """Successively extract periodic apps from an unlabeled pool.

    Each round proposes a period from the periodogram, labels the receptions
    that fit it, refines the period on the labeled set with the harmonic fit
    and labels once more with the refined period (the periodogram peak of a
    composite can sit a few tenths of a percent off, which is enough to
    dephase the fit scores across a long span).  Stops when the pool is down
    to psi receptions, the peak is not significant, or the labeled set is
    too small to accept.  Returns the fitted apps and the residual pool.
    """
    remaining = np.sort(as_times(pool))
    apps: list[AppEstimate] = []
    while len(remaining) > config.psi:
        period = _propose_from_pool(remaining, config)
        if period is None:
            break
        survivors = _label_pool(remaining, period)
        if len(survivors) <= config.psi:
            break  # significant peak but no acceptable membership: stop
        try:
            app = fit_series(remaining[survivors], config.fit)
            relabeled = _label_pool(remaining, app.period)
            if len(relabeled) <= config.psi:
                break  # refined period no longer supported: reject hypothesis
            survivors = relabeled
            app = fit_series(remaining[survivors], config.fit)
        except ValueError:
            break
        app.label = len(apps) + 1
        apps.append(app)
        remaining = np.delete(remaining, survivors)
    return apps, remaining


@dataclass
class DeviceMonitor:
    """Streaming clustering state for one device (single-writer)."""

    device_id: str = ""
    config: ClusterConfig = field(default_factory=ClusterConfig)
    apps: list[AppEstimate] = field(default_factory=list)
    pool: list[float] = field(default_factory=list)
    last_seen: float | None = None

    def observe(self, new_time: float) -> "DeviceMonitor":
        """Greedy step for one reception: attach to the best app or pool it."""
        t = float(new_time)
        if self.last_seen is not None and t < self.last_seen:
            raise ValueError("receptions must arrive in time order")
        self.last_seen = t

        if self.apps:
            raw = np.array(
                [float(raw_phase_fit(t - app.last_time, app.period)) for app in self.apps]
            )
            best = int(np.argmax(raw))
            if self.config.assignment == "raw_cosine":
                accept = raw[best] > 0.0
            else:
                accept = (raw[best] + 1.0) / 2.0 > self.config.likelihood_threshold
            if accept:
                self.apps[best] = extend_fit(self.apps[best], t, self.config.fit)
                return self

        self.pool.append(t)
        if len(self.pool) > self.config.psi:
            found, residual = cluster_pool(np.asarray(self.pool), self.config)
            if found:
                next_label = max((app.label or 0) for app in self.apps) + 1 if self.apps else 1
                for app in found:
                    app.label = next_label
                    next_label += 1
                self.apps.extend(found)
                self.pool = [float(x) for x in residual]
        return self

    def report(self, t_now: float, window: float, k: int | None = None) -> KpiReport:
        """Windowed outage plus offline flags; offline apps leave the ratio."""
        k = self.config.k_offline if k is None else k
        if not self.apps:
            return KpiReport(
                outage_estimate=0.0,
                window=window,
                device_offline=False,
                flag="no_model",
            )
        offline = {
            app.label if app.label is not None else idx
            for idx, app in enumerate(self.apps)
            if is_offline(app, t_now, k)
        }
        lost = transmitted = received = 0
        for idx, app in enumerate(self.apps):
            key = app.label if app.label is not None else idx
            if key in offline:
                continue
            got, sent = outage_counts(app, t_now, window)
            received += got
            transmitted += sent
            lost += sent - got
        return KpiReport(
            outage_estimate=lost / transmitted if transmitted else 0.0,
            window=window,
            offline_apps=offline,
            device_offline=len(offline) == len(self.apps),
            received_count=received,
            inferred_transmitted_count=transmitted,
            flag="ok" if transmitted else "no_data",
        )


def replay(times, config: ClusterConfig, device_id: str = "") -> DeviceMonitor:
    """Feed a whole series through the streaming engine, one reception at a time."""
    monitor = DeviceMonitor(device_id=device_id, config=config)
    for t in as_times(times):
        monitor.observe(float(t))
    return monitor


# --- snapshot format (versioned plain text) ------------------------------------


def save_monitor(monitor: DeviceMonitor, path) -> None:
    """Write a restartable snapshot: config, fitted apps, unlabeled pool."""
    cfg = monitor.config
    lines = [
        f"qpmon-monitor v{SNAPSHOT_VERSION}",
        f"device = {monitor.device_id}",
        f"psi = {cfg.psi}",
        f"sigma = {cfg.sigma!r}",
        f"oversample = {cfg.oversample}",
        f"freq_headroom = {cfg.freq_headroom!r}",
        f"k_offline = {cfg.k_offline}",
        f"assignment = {cfg.assignment}",
        f"apps = {len(monitor.apps)}",
    ]
    for app in monitor.apps:
        lines.append(
            "app "
            + " ".join(
                [
                    f"label={app.label if app.label is not None else -1}",
                    f"period={app.period!r}",
                    f"offset={app.offset!r}" if app.offset is not None else "offset=none",
                    "times=" + ",".join(repr(float(t)) for t in app.times),
                    "harmonics=" + ",".join(str(int(h)) for h in app.harmonics),
                ]
            )
        )
    lines.append("pool = " + ",".join(repr(float(t)) for t in monitor.pool))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_monitor(path) -> DeviceMonitor:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or not lines[0].startswith("qpmon-monitor v"):
        raise ValueError("not a monitor snapshot")
    version = int(lines[0].split("v")[-1])
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")

    fields: dict[str, str] = {}
    apps: list[AppEstimate] = []
    pool: list[float] = []
    for line in lines[1:]:
        if line.startswith("app "):
            parts = dict(item.split("=", 1) for item in line[4:].split(" "))
            times = np.array([float(x) for x in parts["times"].split(",")])
            harmonics = np.array(
                [int(x) for x in parts["harmonics"].split(",")] if parts["harmonics"] else [],
                dtype=int,
            )
            label = int(parts["label"])
            apps.append(
                AppEstimate(
                    period=float(parts["period"]),
                    times=times,
                    harmonics=harmonics,
                    offset=None if parts["offset"] == "none" else float(parts["offset"]),
                    label=None if label < 0 else label,
                )
            )
        elif "=" in line:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    if fields.get("pool"):
        pool = [float(x) for x in fields["pool"].split(",")]
    config = ClusterConfig(
        psi=int(fields["psi"]),
        sigma=float(fields["sigma"]),
        oversample=int(fields["oversample"]),
        freq_headroom=float(fields["freq_headroom"]),
        k_offline=int(fields["k_offline"]),
        assignment=fields["assignment"],
    )
    monitor = DeviceMonitor(device_id=fields.get("device", ""), config=config, apps=apps, pool=pool)
    times = [app.last_time for app in apps] + pool
    monitor.last_seen = max(times) if times else None
    return monitor
