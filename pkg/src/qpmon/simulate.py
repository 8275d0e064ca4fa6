"""Seeded generator of quasi-periodic traffic with jitter, drops and offline cuts.

Transmission n of an app goes out at ``offset + period * n + J_n`` where J_n
is exponential network delay (mean ``jitter_mean``) rescaled by
``jitter_scale * period`` and rejection-resampled into ``[0, period / 2)`` so
that no transmission can overtake the previous one.  Each transmission
independently survives the network with probability
``1 - outage_probability``; generation continues until the requested number
of receptions exists.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# Two-app parameter family used throughout the simulation studies:
# period_1 ~ U(100, 200), period_2 ~ U(1, 5) * period_1,
# offset_i ~ U(0, 0.5) * period_i, jitter ~ Exp(mean 0.2) * period_i / 20.
DEFAULT_JITTER_MEAN = 0.2
DEFAULT_JITTER_SCALE = 1.0 / 20.0


@dataclass(frozen=True)
class AppSpec:
    """Parameters of one synthetic quasi-periodic application."""

    period: float
    offset: float = 0.0
    jitter_scale: float = DEFAULT_JITTER_SCALE
    jitter_mean: float = DEFAULT_JITTER_MEAN
    app_id: int = 1

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be non-negative")
        if self.jitter_mean <= 0:
            raise ValueError("jitter_mean must be positive")


@dataclass(frozen=True)
class SimSpec:
    """One reproducible traffic scenario."""

    apps: tuple[AppSpec, ...]
    outage_probability: float = 0.0
    n_samples: int = 50
    offline_at: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        if not 0.0 <= self.outage_probability < 1.0:
            raise ValueError("outage_probability must lie in [0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class GroundTruth:
    """Everything the generator knows: sent, received, dropped, merged."""

    tx_times: dict[int, np.ndarray]
    rx_times: dict[int, np.ndarray]
    loss_mask: dict[int, np.ndarray]  # True where the transmission was dropped
    composite_rx: list[tuple[float, int]] = field(default_factory=list)
    offline_time: float | None = None
    offline_app: int | None = None

    def true_outage(self, app_id: int) -> float:
        mask = self.loss_mask[app_id]
        return float(mask.sum() / len(mask)) if len(mask) else 0.0


def _sample_jitter(spec: AppSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.jitter_scale == 0.0:
        return np.zeros(n)
    scale = spec.jitter_scale * spec.period
    jitter = rng.exponential(spec.jitter_mean, size=n) * scale
    # resample draws violating the no-overtake bound J < period / 2
    bad = jitter >= spec.period / 2
    while np.any(bad):
        jitter[bad] = rng.exponential(spec.jitter_mean, size=int(bad.sum())) * scale
        bad = jitter >= spec.period / 2
    return jitter


def generate_app(
    spec: AppSpec, outage_probability: float, n_samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate one app until exactly n_samples receptions survive.

    Returns (tx_times, rx_times, loss_mask); tx ends at the final reception.
    """
    if not 0.0 <= outage_probability < 1.0:
        raise ValueError("outage_probability must lie in [0, 1)")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    survived = np.zeros(0, dtype=bool)
    while survived.sum() < n_samples:
        need = n_samples - int(survived.sum())
        block = max(16, int(np.ceil(need / (1.0 - outage_probability) * 1.5)))
        survived = np.concatenate(
            [survived, rng.random(block) >= outage_probability]
        )
    last = int(np.nonzero(survived)[0][n_samples - 1])
    survived = survived[: last + 1]

    n_tx = len(survived)
    jitter = _sample_jitter(spec, n_tx, rng)
    tx_times = spec.offset + spec.period * np.arange(n_tx) + jitter
    rx_times = tx_times[survived]
    return tx_times, rx_times, ~survived


def sample_app_pair(rng: np.random.Generator) -> tuple[AppSpec, AppSpec]:
    """Draw the standard two-app parameter family used by the experiments."""
    period_1 = rng.uniform(100.0, 200.0)
    period_2 = rng.uniform(1.0, 5.0) * period_1
    offset_1 = rng.uniform(0.0, 0.5) * period_1
    offset_2 = rng.uniform(0.0, 0.5) * period_2
    return (
        AppSpec(period=period_1, offset=offset_1, app_id=1),
        AppSpec(period=period_2, offset=offset_2, app_id=2),
    )


def merge_streams(per_app: dict[int, np.ndarray]) -> list[tuple[float, int]]:
    """Time-sorted union of per-app receptions, ties broken by app id."""
    tagged = [
        (float(t), app_id)
        for app_id in sorted(per_app)
        for t in np.asarray(per_app[app_id], dtype=float)
    ]
    tagged.sort(key=lambda pair: (pair[0], pair[1]))
    return tagged


def simulate(spec: SimSpec) -> GroundTruth:
    """Run a full scenario: all apps, optional offline cut, merged stream."""
    rng = np.random.default_rng(spec.seed)
    tx, rx, masks = {}, {}, {}
    for app in spec.apps:
        tx[app.app_id], rx[app.app_id], masks[app.app_id] = generate_app(
            app, spec.outage_probability, spec.n_samples, rng
        )
    truth = GroundTruth(tx_times=tx, rx_times=rx, loss_mask=masks)
    if spec.offline_at is not None:
        for app in spec.apps:
            truth = cut_offline(truth, app.app_id, spec.offline_at)
    truth.composite_rx = merge_streams(truth.rx_times)
    return truth


def cut_offline(truth: GroundTruth, app_id: int, after_index: int) -> GroundTruth:
    """Drop every transmission of one app after the given transmission index."""
    tx = truth.tx_times[app_id]
    if not 0 <= after_index < len(tx):
        raise ValueError("after_index outside the transmission range")
    keep = after_index + 1
    new_tx = dict(truth.tx_times)
    new_rx = dict(truth.rx_times)
    new_mask = dict(truth.loss_mask)
    new_tx[app_id] = tx[:keep]
    new_mask[app_id] = truth.loss_mask[app_id][:keep]
    new_rx[app_id] = new_tx[app_id][~new_mask[app_id]]
    return GroundTruth(
        tx_times=new_tx,
        rx_times=new_rx,
        loss_mask=new_mask,
        composite_rx=merge_streams(new_rx),
        offline_time=float(tx[after_index]),
        offline_app=app_id,
    )


# --- plain-text scenario files and CSV export ---------------------------------

_SCALARS = {
    "outage_probability": float,
    "n_samples": int,
    "offline_at": int,
    "seed": int,
}
_APP_FIELDS = {
    "period": float,
    "offset": float,
    "jitter_scale": float,
    "jitter_mean": float,
}


def save_spec(spec: SimSpec, path) -> None:
    """Write a scenario as `key = value` lines (apps keyed `app.<id>.<field>`)."""
    lines = [
        f"outage_probability = {spec.outage_probability!r}",
        f"n_samples = {spec.n_samples}",
        f"seed = {spec.seed}",
    ]
    if spec.offline_at is not None:
        lines.append(f"offline_at = {spec.offline_at}")
    for app in spec.apps:
        for name in _APP_FIELDS:
            lines.append(f"app.{app.app_id}.{name} = {getattr(app, name)!r}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_spec(path) -> SimSpec:
    scalars: dict = {}
    app_fields: dict[int, dict] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for raw in handle:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _SCALARS:
                scalars[key] = _SCALARS[key](value)
            elif key.startswith("app."):
                _, app_id, name = key.split(".", 2)
                if name not in _APP_FIELDS:
                    raise ValueError(f"unknown app field {name!r}")
                app_fields.setdefault(int(app_id), {})[name] = _APP_FIELDS[name](value)
            else:
                raise ValueError(f"unknown key {key!r}")
    apps = tuple(
        AppSpec(app_id=app_id, **fields) for app_id, fields in sorted(app_fields.items())
    )
    if not apps:
        raise ValueError("scenario file defines no apps")
    return SimSpec(apps=apps, **scalars)


def export_truth_csv(truth: GroundTruth, path) -> None:
    """Write every transmission as `app_id,tx_time,received` rows."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["app_id", "tx_time", "received"])
        for app_id in sorted(truth.tx_times):
            dropped = truth.loss_mask[app_id]
            for t, lost in zip(truth.tx_times[app_id], dropped):
                writer.writerow([app_id, repr(float(t)), int(not lost)])
