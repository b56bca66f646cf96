"""From labeled reading streams to supervised one-step-ahead batches.

The chain is: slice a half-open time window for one device, turn readings
into (value, delta_t) feature rows, scale with statistics fitted on the
training window only, then pair each row with the next row's value as the
prediction target.  Labels ride along and always describe the target row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Reading
from .errors import EmptyWindow
from .inject import LabeledDataset

HOUR_MS = 3_600_000

# Output for a degenerate (constant) channel: center of the unit interval.
DEGENERATE_VALUE = 0.5


@dataclass(frozen=True)
class WindowSpec:
    """Adjacent training and validation windows starting at origin_ms."""

    train_span_ms: int
    val_span_ms: int
    origin_ms: int

    def __post_init__(self) -> None:
        if self.train_span_ms <= 0 or self.val_span_ms <= 0:
            raise ValueError("window spans must be positive")

    @property
    def val_start_ms(self) -> int:
        return self.origin_ms + self.train_span_ms

    @property
    def end_ms(self) -> int:
        return self.val_start_ms + self.val_span_ms


@dataclass(frozen=True)
class FeatureRow:
    """One model input row: current value and hours since previous reading."""

    value: float
    delta_t: float
    label: bool


def slice_window(labeled: LabeledDataset, device_id: str, start_ms: int,
                 span_ms: int) -> list[tuple[Reading, bool]]:
    """Readings of one device with start_ms <= t < start_ms + span_ms."""
    if span_ms <= 0:
        raise ValueError("span_ms must be positive")
    end_ms = start_ms + span_ms
    rows = [(r, tag) for r, tag in zip(labeled.dataset.readings,
                                       labeled.labels)
            if r.device_id == device_id and start_ms <= r.timestamp_ms < end_ms]
    if len(rows) < 2:
        raise EmptyWindow(
            f"window [{start_ms}, {end_ms}) holds {len(rows)} readings of "
            f"{device_id!r}; need at least 2")
    return rows


def featurize(rows: Sequence[tuple[Reading, bool]]) -> list[FeatureRow]:
    """Convert window rows to feature rows.

    delta_t is the gap to the previous reading in hours, so the first window
    row has no feature row.
    """
    if len(rows) < 2:
        raise ValueError("featurize needs at least 2 readings")
    out: list[FeatureRow] = []
    for (prev, _), (cur, tag) in zip(rows, rows[1:]):
        delta_h = (cur.timestamp_ms - prev.timestamp_ms) / HOUR_MS
        out.append(FeatureRow(value=cur.value, delta_t=delta_h, label=tag))
    return out


@dataclass(frozen=True)
class Normalizer:
    """Channel scaling constants fitted on a training window."""

    value_min: float
    value_max: float
    delta_t_max: float


def fit_normalizer(rows: Sequence[FeatureRow]) -> Normalizer:
    if not rows:
        raise ValueError("cannot fit a normalizer on zero rows")
    values = [r.value for r in rows]
    deltas = [r.delta_t for r in rows]
    return Normalizer(value_min=min(values), value_max=max(values),
                      delta_t_max=max(deltas))


def normalize_value(norm: Normalizer, value: float) -> float:
    span = norm.value_max - norm.value_min
    if span == 0.0:
        return DEGENERATE_VALUE
    return (value - norm.value_min) / span


def denormalize_value(norm: Normalizer, scaled: float) -> float:
    span = norm.value_max - norm.value_min
    if span == 0.0:
        return norm.value_min
    return scaled * span + norm.value_min


def normalize_delta_t(norm: Normalizer, delta_t: float) -> float:
    if norm.delta_t_max == 0.0:
        return DEGENERATE_VALUE
    return delta_t / norm.delta_t_max


def apply_normalizer(norm: Normalizer,
                     rows: Sequence[FeatureRow]) -> list[FeatureRow]:
    """Scale rows with train statistics; validation rows may leave [0, 1]."""
    return [FeatureRow(value=normalize_value(norm, r.value),
                       delta_t=normalize_delta_t(norm, r.delta_t),
                       label=r.label)
            for r in rows]


@dataclass
class SupervisedBatch:
    """Aligned model inputs, targets, and target-row labels."""

    x: np.ndarray        # shape (n, 2): value, delta_t
    y: np.ndarray        # shape (n,): next value
    labels: np.ndarray   # shape (n,), bool: target row injected?

    def __post_init__(self) -> None:
        if not (len(self.x) == len(self.y) == len(self.labels)):
            raise ValueError("batch arrays must align")

    def __len__(self) -> int:
        return len(self.y)


def make_supervised(rows: Sequence[FeatureRow]) -> SupervisedBatch:
    """Pair each feature row with the next row's value as target."""
    if len(rows) < 2:
        raise ValueError("make_supervised needs at least 2 feature rows")
    x = np.array([[r.value, r.delta_t] for r in rows[:-1]], dtype=np.float64)
    y = np.array([r.value for r in rows[1:]], dtype=np.float64)
    labels = np.array([r.label for r in rows[1:]], dtype=bool)
    return SupervisedBatch(x=x, y=y, labels=labels)


def concat_patients(batches: Sequence[SupervisedBatch]) -> SupervisedBatch:
    """Stack batches from several patients into one training set."""
    if not batches:
        raise ValueError("concat_patients needs at least one batch")
    return SupervisedBatch(
        x=np.concatenate([b.x for b in batches]),
        y=np.concatenate([b.y for b in batches]),
        labels=np.concatenate([b.labels for b in batches]),
    )
