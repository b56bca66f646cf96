import numpy as np
import pytest

from anomlab.detector import Hyperparams
from anomlab.domain import validate_dataset
from anomlab.errors import EmptyEvaluation, InsufficientSpan
from anomlab.evaluate import (ConfusionCounts, EDGE_REFERENCE_TRAIN_SECONDS,
                              RESULTS_HEADER, SUMMARY_HEADER, TIMINGS_HEADER,
                              accuracy, all_train_one_val, bench_training,
                              confusion, cross_patient_matrix, report_to_dict,
                              results_rows, run_one, run_repetitions,
                              summary_rows, timing_rows, window_sweep)
from anomlab.inject import AnomalyConfig, AnomalyKind
from anomlab.pipeline import HOUR_MS
from anomlab.seeding import derive_seed

SPIKE = AnomalyConfig(kind=AnomalyKind.SPIKE, count=3)
QUICK_HP = Hyperparams()


def test_confusion_counts_and_accuracy():
    flags = np.array([True, True, False, False, True])
    labels = np.array([True, False, True, False, True])
    counts = confusion(flags, labels)
    assert counts == ConfusionCounts(tp=2, tn=1, fp=1, fn=1)
    assert counts.total == 5
    assert accuracy(counts) == 3 / 5


def test_accuracy_hand_examples():
    assert accuracy(ConfusionCounts(49, 49, 1, 1)) == 0.98
    assert accuracy(ConfusionCounts(5, 5, 0, 0)) == 1.0
    assert accuracy(ConfusionCounts(0, 0, 3, 2)) == 0.0
    with pytest.raises(EmptyEvaluation):
        accuracy(ConfusionCounts(0, 0, 0, 0))


def test_confusion_rejects_misaligned_arrays():
    with pytest.raises(ValueError):
        confusion(np.array([True]), np.array([True, False]))


def test_run_one_is_deterministic(two_day_dataset):
    kwargs = dict(train_ds=two_day_dataset, val_ds=two_day_dataset,
                  device_id="temperature", anomaly=SPIKE, origin_ms=0,
                  train_span_ms=3 * HOUR_MS, val_span_ms=HOUR_MS,
                  hp=QUICK_HP)
    a = run_one(**kwargs)
    b = run_one(**kwargs)
    assert a.accuracy == b.accuracy
    assert a.counts == b.counts
    # One hour of minutely readings plus three injected spikes, less the two
    # rows lost to differencing and target pairing.
    assert 55 <= a.counts.total <= 63
    assert 0.0 <= a.accuracy <= 1.0
    assert a.train_wall_time_s > 0


def test_run_repetitions_reports_are_reproducible(two_day_dataset):
    kwargs = dict(train_ds=two_day_dataset, device_id="temperature",
                  anomaly=SPIKE, train_span_ms=3 * HOUR_MS,
                  val_span_ms=HOUR_MS, hp=QUICK_HP, n_reps=2, base_seed=17)
    a = run_repetitions(**kwargs)
    b = run_repetitions(**kwargs)
    # Wall-clock fields differ between runs; everything else must not.
    assert report_to_dict(a) == report_to_dict(b)
    assert len(a.repetitions) == 2
    assert a.kind == "spike"
    assert a.patient_train == a.patient_val == "unit"
    assert a.mean_accuracy == float(np.mean([r.accuracy
                                             for r in a.repetitions]))
    assert set(a.accuracy_quartiles) == {"min", "q1", "median", "q3", "max"}
    assert a.mean_knn_accuracy is None


def test_run_repetitions_with_knn_baseline(two_day_dataset):
    report = run_repetitions(two_day_dataset, "temperature", SPIKE,
                             3 * HOUR_MS, HOUR_MS, QUICK_HP, n_reps=2,
                             base_seed=17, knn_k=3)
    assert all(r.knn_accuracy is not None for r in report.repetitions)
    assert report.mean_knn_accuracy is not None
    assert 0.0 <= report.mean_knn_accuracy <= 1.0


def test_run_repetitions_validates_n_reps(two_day_dataset):
    with pytest.raises(ValueError):
        run_repetitions(two_day_dataset, "temperature", SPIKE, HOUR_MS,
                        HOUR_MS, QUICK_HP, n_reps=0)


def test_windows_beyond_the_data_raise(two_day_dataset):
    with pytest.raises(InsufficientSpan):
        run_repetitions(two_day_dataset, "temperature", SPIKE,
                        72 * HOUR_MS, HOUR_MS, QUICK_HP, n_reps=1)


def test_window_sweep_covers_the_grid(two_day_dataset):
    reports = window_sweep(two_day_dataset, "temperature", SPIKE, QUICK_HP,
                           train_spans_ms=[3 * HOUR_MS, HOUR_MS],
                           val_spans_ms=[HOUR_MS], n_reps=1, base_seed=7)
    assert [(r.train_span_ms, r.val_span_ms) for r in reports] == [
        (3 * HOUR_MS, HOUR_MS), (HOUR_MS, HOUR_MS)]


def test_sweep_cell_matches_standalone_run(two_day_dataset):
    reports = window_sweep(two_day_dataset, "temperature", SPIKE, QUICK_HP,
                           train_spans_ms=[3 * HOUR_MS],
                           val_spans_ms=[HOUR_MS], n_reps=2, base_seed=7)
    alone = run_repetitions(
        two_day_dataset, "temperature", SPIKE, 3 * HOUR_MS, HOUR_MS,
        QUICK_HP, n_reps=2,
        base_seed=derive_seed(7, "cell", 3 * HOUR_MS, HOUR_MS))
    assert report_to_dict(reports[0]) == report_to_dict(alone)


def second_patient(two_day_dataset):
    return validate_dataset("twin", two_day_dataset.readings,
                            two_day_dataset.catalog)


def test_cross_patient_matrix_single_patient(two_day_dataset):
    ids, matrix, reports = cross_patient_matrix(
        [two_day_dataset], "temperature", SPIKE, QUICK_HP,
        train_span_ms=3 * HOUR_MS, val_span_ms=HOUR_MS, n_reps=1,
        base_seed=1)
    assert ids == ["unit"]
    assert matrix.shape == (1, 1)
    assert matrix[0, 0] == reports[0].mean_accuracy


def test_cross_patient_matrix_pairs(two_day_dataset):
    twin = second_patient(two_day_dataset)
    ids, matrix, reports = cross_patient_matrix(
        [two_day_dataset, twin], "temperature", SPIKE, QUICK_HP,
        train_span_ms=3 * HOUR_MS, val_span_ms=HOUR_MS, n_reps=1,
        base_seed=1)
    assert ids == ["unit", "twin"]
    assert matrix.shape == (2, 2)
    assert len(reports) == 4
    assert reports[1].patient_train == "unit"
    assert reports[1].patient_val == "twin"
    with pytest.raises(ValueError):
        cross_patient_matrix([], "temperature", SPIKE, QUICK_HP)


def test_pooled_training_on_identical_twins_changes_little(two_day_dataset):
    twin = second_patient(two_day_dataset)
    comparison = all_train_one_val(
        [two_day_dataset, twin], "unit", "temperature", SPIKE, QUICK_HP,
        train_span_ms=3 * HOUR_MS, val_span_ms=HOUR_MS, n_reps=2,
        base_seed=5)
    assert comparison.held_out == "unit"
    assert comparison.self_accuracy == comparison.self_report.mean_accuracy
    assert (comparison.pooled_accuracy
            == comparison.pooled_report.mean_accuracy)
    assert comparison.pooled_report.patient_train == "all"
    # Twice the same training data should score about the same as once.
    assert abs(comparison.self_accuracy - comparison.pooled_accuracy) < 0.1


def test_bench_training_aggregates_wall_times(two_day_dataset):
    summary = bench_training(two_day_dataset, "temperature", SPIKE, QUICK_HP,
                             train_span_ms=3 * HOUR_MS, val_span_ms=HOUR_MS,
                             n_reps=2, base_seed=3)
    assert summary.kind == "spike"
    assert summary.n_reps == 2
    assert len(summary.per_rep_s) == 2
    assert summary.min_s == min(summary.per_rep_s)
    assert summary.max_s == max(summary.per_rep_s)
    assert abs(summary.mean_s - np.mean(summary.per_rep_s)) < 1e-12
    assert summary.reference_s == 0.88


def test_edge_reference_table():
    assert EDGE_REFERENCE_TRAIN_SECONDS == {"on_off": 26.0, "variance": 11.0,
                                            "spike": 0.88}


def test_report_dict_and_csv_rows(two_day_dataset):
    report = run_repetitions(two_day_dataset, "temperature", SPIKE,
                             3 * HOUR_MS, HOUR_MS, QUICK_HP, n_reps=2,
                             base_seed=17)
    data = report_to_dict(report)
    assert data["train_span_h"] == 3.0
    assert data["val_span_h"] == 1.0
    assert len(data["repetitions"]) == 2
    assert "train_wall_time_s" not in str(data)

    rows = results_rows([report])
    assert len(rows) == 2
    assert all(len(row) == len(RESULTS_HEADER) for row in rows)
    assert float(rows[0][7]) == report.repetitions[0].accuracy

    srows = summary_rows([report])
    assert len(srows) == 1
    assert len(srows[0]) == len(SUMMARY_HEADER)
    assert float(srows[0][7]) == report.mean_accuracy

    trows = timing_rows([report])
    assert len(trows) == 2
    assert all(len(row) == len(TIMINGS_HEADER) for row in trows)
