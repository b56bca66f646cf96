"""Anomaly injection for per-device reading streams.

Three kinds of synthetic faults, each anchored at a random timestamp inside
the target device's observed time range:

* on_off   -- a rapid burst of alternating 1/0 readings (binary devices),
* variance -- a cluster of draws whose spread is a multiple of the local
              standard deviation (value devices),
* spike    -- a single reading at a multiple of the local level (value
              devices).

Injected readings are merged into the stream by timestamp; readings that tie
on timestamp keep originals first.  Labels mark exactly the injected rows.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from enum import Enum
from statistics import median

import numpy as np

from .domain import PatientDataset, Reading, ValueFormat, validate_dataset
from .errors import DeviceNotFound, IncompatibleKind, InsufficientData
from .seeding import rng_for


class AnomalyKind(str, Enum):
    ON_OFF = "on_off"
    VARIANCE = "variance"
    SPIKE = "spike"


# Readings examined around the anchor when estimating local level and spread.
LOCAL_WINDOW = 50

# Floor applied to the local standard deviation so variance draws never
# collapse to a point mass on constant data.
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class AnomalyConfig:
    """Parameters of one injection request."""

    kind: AnomalyKind
    count: int = 10
    seed: int = 0
    on_off_burst_len: int = 40
    on_off_interval_ms: int = 500
    variance_sigma_factor: float = 6.0
    variance_samples: int = 20
    spike_magnitude_factor: float = 8.0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.on_off_burst_len < 1:
            raise ValueError("on_off_burst_len must be at least 1")
        if self.on_off_interval_ms < 1:
            raise ValueError("on_off_interval_ms must be at least 1 ms")
        if self.variance_samples < 1:
            raise ValueError("variance_samples must be at least 1")
        if self.variance_sigma_factor <= 1.0:
            raise ValueError("variance_sigma_factor must exceed 1")
        if self.spike_magnitude_factor <= 1.0:
            raise ValueError("spike_magnitude_factor must exceed 1")

    def readings_per_event(self) -> int:
        if self.kind is AnomalyKind.ON_OFF:
            return self.on_off_burst_len
        if self.kind is AnomalyKind.VARIANCE:
            return self.variance_samples
        return 1


@dataclass
class LabeledDataset:
    """A dataset plus per-reading anomaly labels."""

    dataset: PatientDataset
    labels: list[bool] = field(repr=False)
    injected_count: int

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.dataset.readings):
            raise ValueError("labels must align with readings")


def label_clean(dataset: PatientDataset) -> LabeledDataset:
    """Wrap a dataset that contains no injected readings."""
    return LabeledDataset(dataset=dataset,
                          labels=[False] * len(dataset.readings),
                          injected_count=0)


def make_on_off_event(anchor_ts: int, device_id: str,
                      config: AnomalyConfig) -> list[Reading]:
    """Alternating 1/0 burst starting with 1 at the anchor."""
    return [Reading(anchor_ts + i * config.on_off_interval_ms, device_id,
                    float(1 - i % 2))
            for i in range(config.on_off_burst_len)]


def make_variance_event(anchor_ts: int, local_mean: float, local_sigma: float,
                        device_id: str, gap_ms: int, config: AnomalyConfig,
                        rng: np.random.Generator) -> list[Reading]:
    """Readings spread far wider than the local noise."""
    sd = config.variance_sigma_factor * max(local_sigma, SIGMA_FLOOR)
    values = rng.normal(local_mean, sd, config.variance_samples)
    return [Reading(anchor_ts + i * gap_ms, device_id, float(v))
            for i, v in enumerate(values)]


def make_spike_event(anchor_ts: int, underlying_level: float,
                     device_id: str, config: AnomalyConfig) -> list[Reading]:
    """A single reading at a multiple of the local level."""
    return [Reading(anchor_ts, device_id,
                    underlying_level * config.spike_magnitude_factor)]


def _local_stats(timestamps: list[int], values: np.ndarray,
                 anchor_ts: int) -> tuple[float, float]:
    """Mean and population sigma of the readings nearest the anchor."""
    n = len(timestamps)
    k = min(LOCAL_WINDOW, n)
    pos = bisect.bisect_left(timestamps, anchor_ts)
    lo, hi = pos, pos  # window [lo, hi)
    while hi - lo < k:
        if lo == 0:
            hi += 1
        elif hi == n:
            lo -= 1
        elif anchor_ts - timestamps[lo - 1] <= timestamps[hi] - anchor_ts:
            lo -= 1
        else:
            hi += 1
    window = values[lo:hi]
    return float(np.mean(window)), float(np.std(window))


def _median_gap_ms(timestamps: list[int]) -> int:
    gaps = [b - a for a, b in zip(timestamps, timestamps[1:])]
    return max(1, int(median(gaps)))


def _draw_anchor(rng: np.random.Generator, t_min: int, t_max: int,
                 event_span_ms: int) -> int:
    """Uniform anchor such that the whole event stays inside [t_min, t_max].

    When the event span exceeds the device's range the anchor collapses to
    t_min and trailing timestamps get clamped by the caller.
    """
    hi = t_max - event_span_ms
    if hi <= t_min:
        return t_min
    return int(rng.integers(t_min, hi + 1))


def _check_compatible(kind: AnomalyKind, fmt: ValueFormat,
                      device_id: str) -> None:
    if kind is AnomalyKind.ON_OFF:
        if fmt is not ValueFormat.BINARY:
            raise IncompatibleKind(
                f"on_off bursts need a Binary device, {device_id!r} is "
                f"{fmt.value}")
    elif fmt is ValueFormat.BINARY:
        raise IncompatibleKind(
            f"{kind.value} anomalies need a value device, {device_id!r} "
            f"is Binary")


def inject(dataset: PatientDataset, device_id: str,
           config: AnomalyConfig) -> LabeledDataset:
    """Inject config.count anomalous events into one device's stream."""
    spec = dataset.catalog.get(device_id)
    if spec is None or not any(r.device_id == device_id
                               for r in dataset.readings):
        raise DeviceNotFound(f"no readings for device {device_id!r}")
    _check_compatible(config.kind, spec.value_format, device_id)

    originals = dataset.device_readings(device_id)
    if len(originals) < 2:
        raise InsufficientData(
            f"device {device_id!r} has {len(originals)} readings; "
            f"need at least 2 to anchor an injection")
    timestamps = [r.timestamp_ms for r in originals]
    values = np.array([r.value for r in originals])
    t_min, t_max = timestamps[0], timestamps[-1]
    gap_ms = _median_gap_ms(timestamps)

    injected: list[Reading] = []
    for event_index in range(config.count):
        rng = rng_for(config.seed, device_id, event_index)
        if config.kind is AnomalyKind.ON_OFF:
            span = (config.on_off_burst_len - 1) * config.on_off_interval_ms
            anchor = _draw_anchor(rng, t_min, t_max, span)
            event = make_on_off_event(anchor, device_id, config)
        elif config.kind is AnomalyKind.VARIANCE:
            span = (config.variance_samples - 1) * gap_ms
            anchor = _draw_anchor(rng, t_min, t_max, span)
            mean, sigma = _local_stats(timestamps, values, anchor)
            event = make_variance_event(anchor, mean, sigma, device_id,
                                        gap_ms, config, rng)
        else:
            anchor = _draw_anchor(rng, t_min, t_max, 0)
            level, _ = _local_stats(timestamps, values, anchor)
            event = make_spike_event(anchor, level, device_id, config)
        for r in event:
            ts = min(r.timestamp_ms, t_max)
            value = r.value
            if (spec.value_format is ValueFormat.INTEGER
                    and config.kind is not AnomalyKind.ON_OFF):
                value = float(np.rint(value))
            injected.append(Reading(ts, device_id, value))

    # Originals first so the stable sort leaves injected readings after
    # originals wherever timestamps tie.
    tagged = ([(r, False) for r in dataset.readings]
              + [(r, True) for r in injected])
    tagged.sort(key=lambda pair: pair[0].timestamp_ms)
    merged = validate_dataset(dataset.patient_id,
                              [r for r, _ in tagged], dataset.catalog)
    return LabeledDataset(dataset=merged,
                          labels=[tag for _, tag in tagged],
                          injected_count=len(injected))


def write_labeled_csv(path, labeled: LabeledDataset) -> None:
    """CSV with an is_anomaly column appended to the reading schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp_ms", "device_id", "value", "is_anomaly"])
        for reading, tag in zip(labeled.dataset.readings, labeled.labels):
            writer.writerow([reading.timestamp_ms, reading.device_id,
                             repr(reading.value), int(tag)])
