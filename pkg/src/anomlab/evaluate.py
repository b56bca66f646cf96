"""Seeded, repeatable detection experiments.

Every experiment repeats the same recipe: pick a window origin, train on a
clean training window, inject anomalies into the adjacent validation window,
detect, and score sample-level flags against the injection labels.  A sample
counts as positive exactly when its target reading was injected.

All randomness derives from (base_seed, repetition index), so reports are
reproducible bit for bit regardless of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .detector import Hyperparams, detect, knn_detect, threshold, train
from .domain import PatientDataset, validate_dataset
from .errors import EmptyEvaluation, InsufficientSpan
from .inject import AnomalyConfig, inject, label_clean
from .pipeline import (HOUR_MS, apply_normalizer, concat_patients, featurize,
                       fit_normalizer, make_supervised, slice_window)
from .seeding import derive_seed, rng_for

# The standard window grid: one day, a few hours, and a quarter hour.
SPAN_DAY_MS = 24 * HOUR_MS
SPAN_HOURS_MS = 3 * HOUR_MS
SPAN_QUARTER_MS = HOUR_MS // 4
DEFAULT_SPANS_MS = (SPAN_DAY_MS, SPAN_HOURS_MS, SPAN_QUARTER_MS)

# Minimum readings a window must hold to produce at least one supervised pair.
_MIN_WINDOW_READINGS = 3
_ORIGIN_ATTEMPTS = 200

# Reference training times measured on a Raspberry Pi 4 class edge device,
# printed next to bench results for context.
EDGE_REFERENCE_TRAIN_SECONDS = {
    "on_off": 26.0,
    "variance": 11.0,
    "spike": 0.88,
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def accuracy(counts: ConfusionCounts) -> float:
    """(TP + TN) / total."""
    if counts.total == 0:
        raise EmptyEvaluation("no classified samples")
    return (counts.tp + counts.tn) / counts.total


def confusion(flags: np.ndarray, labels: np.ndarray) -> ConfusionCounts:
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.shape != labels.shape:
        raise ValueError("flags and labels must align")
    return ConfusionCounts(
        tp=int(np.sum(flags & labels)),
        tn=int(np.sum(~flags & ~labels)),
        fp=int(np.sum(flags & ~labels)),
        fn=int(np.sum(~flags & labels)),
    )


@dataclass(frozen=True)
class Repetition:
    rep: int
    origin_ms: int
    counts: ConfusionCounts
    accuracy: float
    train_wall_time_s: float
    detect_wall_time_s: float
    knn_counts: ConfusionCounts | None = None
    knn_accuracy: float | None = None


@dataclass
class ExperimentReport:
    kind: str
    device_id: str
    patient_train: str
    patient_val: str
    train_span_ms: int
    val_span_ms: int
    base_seed: int
    repetitions: list[Repetition] = field(repr=False)
    mean_accuracy: float = 0.0
    accuracy_quartiles: dict[str, float] = field(default_factory=dict)
    mean_knn_accuracy: float | None = None


def _quartiles(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    q1, q2, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return {"min": float(np.min(arr)), "q1": float(q1), "median": float(q2),
            "q3": float(q3), "max": float(np.max(arr))}


def _device_bounds(dataset: PatientDataset, device_id: str) -> tuple[int, int]:
    stamps = [r.timestamp_ms for r in dataset.readings
              if r.device_id == device_id]
    if len(stamps) < _MIN_WINDOW_READINGS:
        raise InsufficientSpan(
            f"device {device_id!r} has too few readings to evaluate")
    return stamps[0], stamps[-1]


def _count_in_window(dataset: PatientDataset, device_id: str,
                     start_ms: int, end_ms: int) -> int:
    return sum(1 for r in dataset.readings
               if r.device_id == device_id
               and start_ms <= r.timestamp_ms < end_ms)


def _draw_origin(rng: np.random.Generator, train_ds: PatientDataset,
                 val_ds: PatientDataset, device_id: str,
                 train_span_ms: int, val_span_ms: int) -> int:
    """A random origin whose train and validation windows are both populated."""
    lo_t, hi_t = _device_bounds(train_ds, device_id)
    lo_v, hi_v = _device_bounds(val_ds, device_id)
    lo, hi = max(lo_t, lo_v), min(hi_t, hi_v)
    last_origin = hi - (train_span_ms + val_span_ms)
    if last_origin < lo:
        raise InsufficientSpan(
            f"device {device_id!r} spans {(hi - lo) / HOUR_MS:.2f} h; "
            f"windows need {(train_span_ms + val_span_ms) / HOUR_MS:.2f} h")
    for _ in range(_ORIGIN_ATTEMPTS):
        origin = int(rng.integers(lo, last_origin + 1))
        val_start = origin + train_span_ms
        if (_count_in_window(train_ds, device_id, origin, val_start)
                >= _MIN_WINDOW_READINGS
                and _count_in_window(val_ds, device_id, val_start,
                                     val_start + val_span_ms)
                >= _MIN_WINDOW_READINGS):
            return origin
    raise InsufficientSpan(
        f"no window origin with enough {device_id!r} readings found in "
        f"{_ORIGIN_ATTEMPTS} attempts")


def _val_subset(val_ds: PatientDataset, device_id: str, start_ms: int,
                end_ms: int) -> PatientDataset:
    rows = [r for r in val_ds.readings
            if r.device_id == device_id and start_ms <= r.timestamp_ms < end_ms]
    return validate_dataset(val_ds.patient_id, rows, val_ds.catalog)


def run_one(train_ds: PatientDataset, val_ds: PatientDataset, device_id: str,
            anomaly: AnomalyConfig, origin_ms: int, train_span_ms: int,
            val_span_ms: int, hp: Hyperparams, *, knn_k: int | None = None,
            knn_quantile: float = 0.99, rep: int = 0) -> Repetition:
    """One train/inject/detect pass at a fixed origin."""
    val_start = origin_ms + train_span_ms

    train_rows = featurize(slice_window(label_clean(train_ds), device_id,
                                        origin_ms, train_span_ms))
    norm = fit_normalizer(train_rows)
    train_batch = make_supervised(apply_normalizer(norm, train_rows))

    window = _val_subset(val_ds, device_id, val_start,
                         val_start + val_span_ms)
    labeled = inject(window, device_id, anomaly)
    val_rows = featurize(slice_window(labeled, device_id, val_start,
                                      val_span_ms))
    val_batch = make_supervised(apply_normalizer(norm, val_rows))

    model = train(train_batch, hp, normalizer=norm)
    thr = threshold(model, hp.alpha)
    started = time.perf_counter()
    flags = detect(model, thr, val_batch)
    detect_elapsed = time.perf_counter() - started
    counts = confusion(flags, val_batch.labels)

    knn_counts = None
    knn_acc = None
    if knn_k is not None:
        knn_flags = knn_detect(train_batch, val_batch, knn_k, knn_quantile)
        knn_counts = confusion(knn_flags, val_batch.labels)
        knn_acc = accuracy(knn_counts)

    return Repetition(
        rep=rep,
        origin_ms=origin_ms,
        counts=counts,
        accuracy=accuracy(counts),
        train_wall_time_s=model.train_wall_time_s,
        detect_wall_time_s=detect_elapsed,
        knn_counts=knn_counts,
        knn_accuracy=knn_acc,
    )


def run_repetitions(train_ds: PatientDataset, device_id: str,
                    anomaly: AnomalyConfig, train_span_ms: int,
                    val_span_ms: int, hp: Hyperparams, *,
                    n_reps: int = 30, base_seed: int = 0,
                    val_ds: PatientDataset | None = None,
                    knn_k: int | None = None,
                    knn_quantile: float = 0.99) -> ExperimentReport:
    """Repeat the experiment with fresh window origins and injection seeds."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if val_ds is None:
        val_ds = train_ds
    reps: list[Repetition] = []
    for r in range(n_reps):
        rep_seed = derive_seed(base_seed, r)
        origin = _draw_origin(rng_for(rep_seed, "origin"), train_ds, val_ds,
                              device_id, train_span_ms, val_span_ms)
        cfg = replace(anomaly, seed=derive_seed(rep_seed, "inject"))
        rep_hp = replace(hp, seed=derive_seed(rep_seed, "train"))
        reps.append(run_one(train_ds, val_ds, device_id, cfg, origin,
                            train_span_ms, val_span_ms, rep_hp,
                            knn_k=knn_k, knn_quantile=knn_quantile, rep=r))
    accs = [rep.accuracy for rep in reps]
    knn_accs = [rep.knn_accuracy for rep in reps
                if rep.knn_accuracy is not None]
    return ExperimentReport(
        kind=anomaly.kind.value,
        device_id=device_id,
        patient_train=train_ds.patient_id,
        patient_val=val_ds.patient_id,
        train_span_ms=train_span_ms,
        val_span_ms=val_span_ms,
        base_seed=base_seed,
        repetitions=reps,
        mean_accuracy=float(np.mean(accs)),
        accuracy_quartiles=_quartiles(accs),
        mean_knn_accuracy=(float(np.mean(knn_accs)) if knn_accs else None),
    )


def _sweep_cell(args) -> ExperimentReport:
    return run_repetitions(**args)


def window_sweep(dataset: PatientDataset, device_id: str,
                 anomaly: AnomalyConfig, hp: Hyperparams, *,
                 train_spans_ms: Sequence[int] = DEFAULT_SPANS_MS,
                 val_spans_ms: Sequence[int] = DEFAULT_SPANS_MS,
                 n_reps: int = 30, base_seed: int = 0, jobs: int = 1,
                 knn_k: int | None = None) -> list[ExperimentReport]:
    """Evaluate every (train span, val span) combination.

    Cell seeds derive from the spans themselves, so a cell's report is
    identical whether it ran alone or as part of the sweep.
    """
    cells = [dict(train_ds=dataset, device_id=device_id, anomaly=anomaly,
                  train_span_ms=int(t), val_span_ms=int(v), hp=hp,
                  n_reps=n_reps,
                  base_seed=derive_seed(base_seed, "cell", int(t), int(v)),
                  knn_k=knn_k)
             for t in train_spans_ms for v in val_spans_ms]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(cell) for cell in cells]


def cross_patient_matrix(datasets: Sequence[PatientDataset], device_id: str,
                         anomaly: AnomalyConfig, hp: Hyperparams, *,
                         train_span_ms: int = SPAN_HOURS_MS,
                         val_span_ms: int = SPAN_HOURS_MS,
                         n_reps: int = 5, base_seed: int = 0,
                         jobs: int = 1) -> tuple[list[str], np.ndarray,
                                                 list[ExperimentReport]]:
    """Mean accuracy for every (train patient, validation patient) pair.

    A single patient degenerates to the 1x1 same-patient cell.
    """
    if not datasets:
        raise ValueError("cross-patient evaluation needs at least 1 patient")
    cells = [dict(train_ds=a, device_id=device_id, anomaly=anomaly,
                  train_span_ms=train_span_ms, val_span_ms=val_span_ms,
                  hp=hp, n_reps=n_reps,
                  base_seed=derive_seed(base_seed, "cross", a.patient_id,
                                        b.patient_id),
                  val_ds=b)
             for a in datasets for b in datasets]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_cell, cells))
    else:
        reports = [_sweep_cell(cell) for cell in cells]
    n = len(datasets)
    matrix = np.array([r.mean_accuracy for r in reports]).reshape(n, n)
    return [d.patient_id for d in datasets], matrix, reports


@dataclass
class PooledComparison:
    """Self-trained versus everyone-trained accuracy on one held-out patient."""

    held_out: str
    self_accuracy: float
    pooled_accuracy: float
    self_report: ExperimentReport
    pooled_report: ExperimentReport


def all_train_one_val(datasets: Sequence[PatientDataset], held_out_id: str,
                      device_id: str, anomaly: AnomalyConfig,
                      hp: Hyperparams, *, train_span_ms: int = SPAN_HOURS_MS,
                      val_span_ms: int = SPAN_HOURS_MS, n_reps: int = 5,
                      base_seed: int = 0) -> PooledComparison:
    """Compare training on the patient's own window against pooling everyone.

    Both variants share origins, injection seeds, and training seeds, so the
    only difference is the training data (and the normalizer fitted on it).
    """
    held_out = next(d for d in datasets if d.patient_id == held_out_id)
    self_reps: list[Repetition] = []
    pooled_reps: list[Repetition] = []
    for r in range(n_reps):
        rep_seed = derive_seed(base_seed, held_out_id, r)
        origin_rng = rng_for(rep_seed, "origin")
        # One origin whose training window is populated for every patient.
        origin = None
        for _ in range(_ORIGIN_ATTEMPTS):
            candidate = _draw_origin(origin_rng, held_out, held_out,
                                     device_id, train_span_ms, val_span_ms)
            if all(_count_in_window(ds, device_id, candidate,
                                    candidate + train_span_ms)
                   >= _MIN_WINDOW_READINGS for ds in datasets):
                origin = candidate
                break
        if origin is None:
            raise InsufficientSpan(
                "no origin viable across all patients; use longer windows "
                "or denser devices")
        cfg = replace(anomaly, seed=derive_seed(rep_seed, "inject"))
        rep_hp = replace(hp, seed=derive_seed(rep_seed, "train"))
        val_start = origin + train_span_ms

        self_reps.append(run_one(held_out, held_out, device_id, cfg, origin,
                                 train_span_ms, val_span_ms, rep_hp, rep=r))

        per_patient_rows = [
            featurize(slice_window(label_clean(ds), device_id, origin,
                                   train_span_ms))
            for ds in datasets]
        norm = fit_normalizer([row for rows in per_patient_rows
                               for row in rows])
        pooled_batch = concat_patients(
            [make_supervised(apply_normalizer(norm, rows))
             for rows in per_patient_rows])
        window = _val_subset(held_out, device_id, val_start,
                             val_start + val_span_ms)
        labeled = inject(window, device_id, cfg)
        val_rows = featurize(slice_window(labeled, device_id, val_start,
                                          val_span_ms))
        val_batch = make_supervised(apply_normalizer(norm, val_rows))
        model = train(pooled_batch, rep_hp, normalizer=norm)
        thr = threshold(model, rep_hp.alpha)
        started = time.perf_counter()
        flags = detect(model, thr, val_batch)
        detect_elapsed = time.perf_counter() - started
        counts = confusion(flags, val_batch.labels)
        pooled_reps.append(Repetition(
            rep=r, origin_ms=origin, counts=counts,
            accuracy=accuracy(counts),
            train_wall_time_s=model.train_wall_time_s,
            detect_wall_time_s=detect_elapsed))

    def _mk_report(reps: list[Repetition], patient_train: str) -> ExperimentReport:
        accs = [rep.accuracy for rep in reps]
        return ExperimentReport(
            kind=anomaly.kind.value, device_id=device_id,
            patient_train=patient_train, patient_val=held_out_id,
            train_span_ms=train_span_ms, val_span_ms=val_span_ms,
            base_seed=base_seed, repetitions=reps,
            mean_accuracy=float(np.mean(accs)),
            accuracy_quartiles=_quartiles(accs))

    self_report = _mk_report(self_reps, held_out_id)
    pooled_report = _mk_report(pooled_reps, "all")
    return PooledComparison(
        held_out=held_out_id,
        self_accuracy=self_report.mean_accuracy,
        pooled_accuracy=pooled_report.mean_accuracy,
        self_report=self_report,
        pooled_report=pooled_report,
    )


@dataclass
class TimingSummary:
    kind: str
    device_id: str
    n_reps: int
    mean_s: float
    min_s: float
    max_s: float
    per_rep_s: list[float]
    reference_s: float | None


def bench_training(dataset: PatientDataset, device_id: str,
                   anomaly: AnomalyConfig, hp: Hyperparams, *,
                   train_span_ms: int = SPAN_DAY_MS,
                   val_span_ms: int = SPAN_DAY_MS, n_reps: int = 5,
                   base_seed: int = 0) -> TimingSummary:
    """Measure local training time for one configuration (always serial)."""
    report = run_repetitions(dataset, device_id, anomaly, train_span_ms,
                             val_span_ms, hp, n_reps=n_reps,
                             base_seed=base_seed)
    times = [rep.train_wall_time_s for rep in report.repetitions]
    return TimingSummary(
        kind=anomaly.kind.value,
        device_id=device_id,
        n_reps=n_reps,
        mean_s=float(np.mean(times)),
        min_s=float(np.min(times)),
        max_s=float(np.max(times)),
        per_rep_s=times,
        reference_s=EDGE_REFERENCE_TRAIN_SECONDS.get(anomaly.kind.value),
    )


# Report shaping -------------------------------------------------------------

def _span_hours(span_ms: int) -> float:
    return span_ms / HOUR_MS


def report_to_dict(report: ExperimentReport) -> dict:
    """JSON-ready form of a report, without wall-clock fields."""
    return {
        "kind": report.kind,
        "device": report.device_id,
        "patient_train": report.patient_train,
        "patient_val": report.patient_val,
        "train_span_h": _span_hours(report.train_span_ms),
        "val_span_h": _span_hours(report.val_span_ms),
        "base_seed": report.base_seed,
        "mean_accuracy": report.mean_accuracy,
        "accuracy_quartiles": report.accuracy_quartiles,
        "mean_knn_accuracy": report.mean_knn_accuracy,
        "repetitions": [
            {
                "rep": rep.rep,
                "origin_ms": rep.origin_ms,
                "accuracy": rep.accuracy,
                "tp": rep.counts.tp,
                "tn": rep.counts.tn,
                "fp": rep.counts.fp,
                "fn": rep.counts.fn,
                "knn_accuracy": rep.knn_accuracy,
            }
            for rep in report.repetitions
        ],
    }


RESULTS_HEADER = ["train_span_h", "val_span_h", "patient_train",
                  "patient_val", "kind", "device", "rep", "accuracy",
                  "tp", "tn", "fp", "fn"]

SUMMARY_HEADER = ["train_span_h", "val_span_h", "patient_train",
                  "patient_val", "kind", "device", "n_reps", "mean",
                  "min", "q1", "median", "q3", "max"]

TIMINGS_HEADER = ["train_span_h", "val_span_h", "patient_train",
                  "patient_val", "kind", "device", "rep", "train_time_s",
                  "detect_time_s"]


def results_rows(reports: Sequence[ExperimentReport]) -> list[list]:
    rows = []
    for report in reports:
        for rep in report.repetitions:
            rows.append([repr(_span_hours(report.train_span_ms)),
                         repr(_span_hours(report.val_span_ms)),
                         report.patient_train, report.patient_val,
                         report.kind, report.device_id, rep.rep,
                         repr(rep.accuracy), rep.counts.tp, rep.counts.tn,
                         rep.counts.fp, rep.counts.fn])
    return rows


def summary_rows(reports: Sequence[ExperimentReport]) -> list[list]:
    rows = []
    for report in reports:
        q = report.accuracy_quartiles
        rows.append([repr(_span_hours(report.train_span_ms)),
                     repr(_span_hours(report.val_span_ms)),
                     report.patient_train, report.patient_val,
                     report.kind, report.device_id,
                     len(report.repetitions), repr(report.mean_accuracy),
                     repr(q["min"]), repr(q["q1"]), repr(q["median"]),
                     repr(q["q3"]), repr(q["max"])])
    return rows


def timing_rows(reports: Sequence[ExperimentReport]) -> list[list]:
    rows = []
    for report in reports:
        for rep in report.repetitions:
            rows.append([repr(_span_hours(report.train_span_ms)),
                         repr(_span_hours(report.val_span_ms)),
                         report.patient_train, report.patient_val,
                         report.kind, report.device_id, rep.rep,
                         repr(rep.train_wall_time_s),
                         repr(rep.detect_wall_time_s)])
    return rows
