import numpy as np
import pytest

from anomlab.errors import EmptyWindow
from anomlab.inject import AnomalyConfig, AnomalyKind, inject, label_clean
from anomlab.pipeline import (FeatureRow, Normalizer, SupervisedBatch,
                              WindowSpec, apply_normalizer, concat_patients,
                              denormalize_value, featurize, fit_normalizer,
                              make_supervised, normalize_delta_t,
                              normalize_value, slice_window)

from helpers import ramp_dataset


def test_window_spec_layout():
    spec = WindowSpec(train_span_ms=3_600_000, val_span_ms=900_000,
                      origin_ms=500)
    assert spec.val_start_ms == 3_600_500
    assert spec.end_ms == 4_500_500
    with pytest.raises(ValueError):
        WindowSpec(train_span_ms=0, val_span_ms=900_000, origin_ms=0)


def test_slice_window_is_half_open():
    labeled = label_clean(ramp_dataset(n=10, step_ms=60_000))
    rows = slice_window(labeled, "t", 60_000, 180_000)
    assert [r.timestamp_ms for r, _ in rows] == [60_000, 120_000, 180_000]
    # The reading at start+span itself is excluded.
    rows = slice_window(labeled, "t", 0, 120_000)
    assert [r.timestamp_ms for r, _ in rows] == [0, 60_000]


def test_slice_window_needs_two_readings():
    labeled = label_clean(ramp_dataset(n=10))
    with pytest.raises(EmptyWindow):
        slice_window(labeled, "t", 0, 60_000)
    with pytest.raises(EmptyWindow):
        slice_window(labeled, "other", 0, 600_000)
    with pytest.raises(ValueError):
        slice_window(labeled, "t", 0, 0)


def test_slice_window_carries_labels():
    ds = ramp_dataset(n=200)
    labeled = inject(ds, "t", AnomalyConfig(kind=AnomalyKind.SPIKE, count=3,
                                            seed=1))
    span = (ds.readings[-1].timestamp_ms + 1)
    rows = slice_window(labeled, "t", 0, span)
    assert sum(tag for _, tag in rows) == 3


def test_featurize_delta_t_in_hours_and_first_row_dropped():
    labeled = label_clean(ramp_dataset(n=4, step_ms=1_800_000))
    rows = featurize(slice_window(labeled, "t", 0, 7_200_000))
    assert len(rows) == 3
    assert all(r.delta_t == 0.5 for r in rows)
    assert [r.value for r in rows] == [20.0 + 0.01 * i for i in (1, 2, 3)]


def test_normalizer_matches_hand_examples():
    norm = fit_normalizer([FeatureRow(10.0, 1.0, False),
                           FeatureRow(20.0, 2.0, False)])
    assert norm == Normalizer(value_min=10.0, value_max=20.0, delta_t_max=2.0)
    assert normalize_value(norm, 15.0) == 0.5
    assert normalize_value(norm, 30.0) == 2.0
    assert normalize_delta_t(norm, 1.0) == 0.5


def test_constant_channel_normalizes_to_midpoint():
    norm = fit_normalizer([FeatureRow(7.0, 1.0, False),
                           FeatureRow(7.0, 1.0, False)])
    assert normalize_value(norm, 7.0) == 0.5
    assert denormalize_value(norm, 0.5) == 7.0


def test_normalizer_round_trip():
    rng = np.random.default_rng(0)
    norm = Normalizer(value_min=-3.2, value_max=17.9, delta_t_max=4.0)
    for v in rng.uniform(-50, 50, 100):
        assert abs(denormalize_value(norm, normalize_value(norm, v)) - v) < 1e-9


def test_fit_normalizer_rejects_empty():
    with pytest.raises(ValueError):
        fit_normalizer([])


def test_apply_normalizer_scales_rows():
    norm = Normalizer(value_min=0.0, value_max=10.0, delta_t_max=2.0)
    rows = apply_normalizer(norm, [FeatureRow(5.0, 1.0, True),
                                   FeatureRow(20.0, 4.0, False)])
    assert rows[0] == FeatureRow(0.5, 0.5, True)
    assert rows[1] == FeatureRow(2.0, 2.0, False)


def test_make_supervised_pairs_each_row_with_next_value():
    rows = [FeatureRow(0.1, 1.0, False), FeatureRow(0.2, 1.0, False),
            FeatureRow(0.9, 1.0, True)]
    batch = make_supervised(rows)
    assert len(batch) == 2
    assert batch.x.tolist() == [[0.1, 1.0], [0.2, 1.0]]
    assert batch.y.tolist() == [0.2, 0.9]
    # The label belongs to the target row, not the input row.
    assert batch.labels.tolist() == [False, True]
    with pytest.raises(ValueError):
        make_supervised(rows[:1])


def test_batch_arrays_must_align():
    with pytest.raises(ValueError):
        SupervisedBatch(x=np.zeros((3, 2)), y=np.zeros(3),
                        labels=np.zeros(2, dtype=bool))


def test_concat_patients_stacks_in_order():
    a = make_supervised([FeatureRow(0.1, 1.0, False),
                         FeatureRow(0.2, 1.0, False)])
    b = make_supervised([FeatureRow(0.5, 1.0, False),
                         FeatureRow(0.6, 1.0, True)])
    merged = concat_patients([a, b])
    assert merged.y.tolist() == [0.2, 0.6]
    assert merged.labels.tolist() == [False, True]
    assert len(merged) == 2
    with pytest.raises(ValueError):
        concat_patients([])
