"""Command-line front end: synthesize data, inject anomalies, run experiments.

Every invocation creates a fresh run directory named by UTC timestamp plus a
short digest of the resolved configuration, so runs never overwrite each
other.  All randomness flows from ``base_seed``: rerunning any subcommand
with the same configuration reproduces the experiment outputs byte for byte.
Wall-clock timings (timings.csv, bench.csv) measure the machine rather than
the experiment and are the one exception.

Configuration lives in a JSON file selected with ``--config``; command-line
flags override individual entries.  ``--dump-config`` prints the fully
resolved configuration and exits without running anything.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .detector import Hyperparams
from .domain import (Catalog, PatientDataset, default_catalog,
                     filter_eligible_devices, read_catalog_csv,
                     read_readings_csv, validate_dataset, write_catalog_csv,
                     write_readings_csv)
from .errors import (AnomlabError, ConfigError, EmptyEvaluation, EmptyWindow,
                     InsufficientData, InsufficientSpan, KTooLarge,
                     NonFiniteLoss)
from .evaluate import (ExperimentReport, all_train_one_val, bench_training,
                       cross_patient_matrix, report_to_dict, results_rows,
                       RESULTS_HEADER, run_repetitions, summary_rows,
                       SUMMARY_HEADER, timing_rows, TIMINGS_HEADER,
                       window_sweep)
from .inject import AnomalyConfig, AnomalyKind, inject, write_labeled_csv
from .seeding import derive_seed
from .synth import generate_dataset, generate_profile
from .pipeline import HOUR_MS

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_DATA = 4

DAY_MS = 24 * HOUR_MS

# Experiment device used when the config names none, chosen per anomaly kind
# so the injection is always format-compatible.
DEFAULT_DEVICE_BY_KIND = {
    AnomalyKind.ON_OFF: "front door",
    AnomalyKind.VARIANCE: "temperature",
    AnomalyKind.SPIKE: "temperature",
}

_SPAN_UNITS_MS = {"ms": 1, "s": 1_000, "min": 60_000,
                  "h": 3_600_000, "d": 86_400_000}


def parse_span(text: str, field_name: str) -> int:
    """Turn a span string like '24h', '15min' or '90s' into milliseconds."""
    raw = str(text).strip()
    for unit in sorted(_SPAN_UNITS_MS, key=len, reverse=True):
        if raw.endswith(unit):
            number = raw[: -len(unit)]
            try:
                value = float(number)
            except ValueError:
                break
            ms = value * _SPAN_UNITS_MS[unit]
            if ms <= 0 or ms != int(ms):
                break
            return int(ms)
    raise ConfigError(
        f"{field_name}: cannot parse span {text!r} "
        "(use a positive number with a unit: ms, s, min, h, d)")


# Configuration --------------------------------------------------------------

DEFAULT_CONFIG: dict[str, Any] = {
    "patients": [{"patient_id": f"p{i}"} for i in range(5)],
    "devices": [],
    "anomaly": {
        "kind": "spike",
        "count": 10,
        "on_off_burst_len": 40,
        "on_off_interval_ms": 500,
        "variance_sigma_factor": 6.0,
        "variance_samples": 20,
        "spike_magnitude_factor": 8.0,
    },
    "windows": {
        "train": ["24h", "3h", "15min"],
        "val": ["24h", "3h", "15min"],
    },
    "hyperparams": {
        "learning_rate": 3e-5,
        "batch_size": 1,
        "epochs": 100,
        "hidden_units": 32,
        "alpha": 6.0,
    },
    "n_reps": 30,
    "base_seed": 0,
    "jobs": 0,
    "output_dir": "runs",
    "days": 7,
    "start_date": "1970-01-01",
    "sample_interval": "60s",
    "knn": {"k": None, "quantile": 0.99},
    "crossval_mode": "both",
}


@dataclass(frozen=True)
class PatientSource:
    """One patient: either a (patient_id, seed) to synthesize or a CSV path."""

    patient_id: str
    seed: int | None = None
    path: str | None = None
    catalog_path: str | None = None


@dataclass(frozen=True)
class RunConfig:
    patients: tuple[PatientSource, ...]
    devices: tuple[str, ...]
    anomaly: AnomalyConfig
    train_spans: tuple[str, ...]
    val_spans: tuple[str, ...]
    hyperparams: Hyperparams
    n_reps: int
    base_seed: int
    jobs: int
    output_dir: str
    days: int
    start_date: str
    sample_interval: str
    knn_k: int | None
    knn_quantile: float
    crossval_mode: str

    def to_dict(self) -> dict[str, Any]:
        patients = []
        for src in self.patients:
            if src.path is not None:
                entry: dict[str, Any] = {"path": src.path,
                                         "patient_id": src.patient_id}
                if src.catalog_path is not None:
                    entry["catalog"] = src.catalog_path
            else:
                entry = {"patient_id": src.patient_id, "seed": src.seed}
            patients.append(entry)
        return {
            "patients": patients,
            "devices": list(self.devices),
            "anomaly": {
                "kind": self.anomaly.kind.value,
                "count": self.anomaly.count,
                "on_off_burst_len": self.anomaly.on_off_burst_len,
                "on_off_interval_ms": self.anomaly.on_off_interval_ms,
                "variance_sigma_factor": self.anomaly.variance_sigma_factor,
                "variance_samples": self.anomaly.variance_samples,
                "spike_magnitude_factor": self.anomaly.spike_magnitude_factor,
            },
            "windows": {"train": list(self.train_spans),
                        "val": list(self.val_spans)},
            "hyperparams": {
                "learning_rate": self.hyperparams.learning_rate,
                "batch_size": self.hyperparams.batch_size,
                "epochs": self.hyperparams.epochs,
                "hidden_units": self.hyperparams.hidden_units,
                "alpha": self.hyperparams.alpha,
            },
            "n_reps": self.n_reps,
            "base_seed": self.base_seed,
            "jobs": self.jobs,
            "output_dir": self.output_dir,
            "days": self.days,
            "start_date": self.start_date,
            "sample_interval": self.sample_interval,
            "knn": {"k": self.knn_k, "quantile": self.knn_quantile},
            "crossval_mode": self.crossval_mode,
        }

    def effective_jobs(self) -> int:
        if self.jobs > 0:
            return self.jobs
        return os.cpu_count() or 1

    def train_spans_ms(self) -> list[int]:
        return [parse_span(s, f"windows.train[{i}]")
                for i, s in enumerate(self.train_spans)]

    def val_spans_ms(self) -> list[int]:
        return [parse_span(s, f"windows.val[{i}]")
                for i, s in enumerate(self.val_spans)]

    def sample_interval_ms(self) -> int:
        return parse_span(self.sample_interval, "sample_interval")

    def start_ms(self) -> int:
        date = datetime.date.fromisoformat(self.start_date)
        return (date - datetime.date(1970, 1, 1)).days * DAY_MS


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key {sorted(unknown)[0]!r}")


def _patient_sources(entries: Any, base_seed: int) -> tuple[PatientSource, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("patients: must be a non-empty list")
    sources = []
    for i, entry in enumerate(entries):
        where = f"patients[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: must be an object")
        _require_keys(entry, {"patient_id", "seed", "path", "catalog"}, where)
        if "path" in entry:
            if "seed" in entry:
                raise ConfigError(f"{where}: 'path' and 'seed' are exclusive")
            path = str(entry["path"])
            pid = str(entry.get("patient_id", Path(path).stem))
            sources.append(PatientSource(patient_id=pid, path=path,
                                         catalog_path=entry.get("catalog")))
        else:
            if "patient_id" not in entry:
                raise ConfigError(f"{where}: needs 'patient_id' or 'path'")
            seed = entry.get("seed", base_seed)
            if not isinstance(seed, int):
                raise ConfigError(f"{where}.seed: must be an integer")
            sources.append(PatientSource(patient_id=str(entry["patient_id"]),
                                         seed=seed))
    ids = [s.patient_id for s in sources]
    if len(set(ids)) != len(ids):
        raise ConfigError("patients: duplicate patient_id")
    return tuple(sources)


def _span_list(value: Any, where: str) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: must be a span string or non-empty list")
    spans = tuple(str(s) for s in value)
    for i, s in enumerate(spans):
        parse_span(s, f"{where}[{i}]")
    return spans


def resolve_config(raw: dict[str, Any]) -> RunConfig:
    """Validate a merged config dict and build the typed RunConfig."""
    _require_keys(raw, set(DEFAULT_CONFIG), "config")
    merged = {**DEFAULT_CONFIG, **raw}

    base_seed = merged["base_seed"]
    if not isinstance(base_seed, int) or not 0 <= base_seed < 2**64:
        raise ConfigError("base_seed: must be an integer in [0, 2^64)")

    anomaly_cfg = {**DEFAULT_CONFIG["anomaly"], **(merged["anomaly"] or {})}
    _require_keys(anomaly_cfg, set(DEFAULT_CONFIG["anomaly"]), "anomaly")
    try:
        kind = AnomalyKind(anomaly_cfg.pop("kind"))
    except ValueError as exc:
        raise ConfigError(f"anomaly.kind: {exc}") from None
    try:
        anomaly = AnomalyConfig(kind=kind, seed=0, **anomaly_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"anomaly: {exc}") from None

    hp_cfg = {**DEFAULT_CONFIG["hyperparams"], **(merged["hyperparams"] or {})}
    _require_keys(hp_cfg, set(DEFAULT_CONFIG["hyperparams"]), "hyperparams")
    try:
        hyperparams = Hyperparams(seed=0, **hp_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"hyperparams: {exc}") from None

    windows = {**DEFAULT_CONFIG["windows"], **(merged["windows"] or {})}
    _require_keys(windows, {"train", "val"}, "windows")

    knn = {**DEFAULT_CONFIG["knn"], **(merged["knn"] or {})}
    _require_keys(knn, {"k", "quantile"}, "knn")
    if knn["k"] is not None and (not isinstance(knn["k"], int)
                                 or knn["k"] < 1):
        raise ConfigError("knn.k: must be null or a positive integer")
    if not 0 < float(knn["quantile"]) < 1:
        raise ConfigError("knn.quantile: must lie in (0, 1)")

    n_reps = merged["n_reps"]
    if not isinstance(n_reps, int) or n_reps < 1:
        raise ConfigError("n_reps: must be a positive integer")
    days = merged["days"]
    if not isinstance(days, int) or days < 1:
        raise ConfigError("days: must be a positive integer")
    jobs = merged["jobs"]
    if not isinstance(jobs, int) or jobs < 0:
        raise ConfigError("jobs: must be a non-negative integer (0 = auto)")
    mode = merged["crossval_mode"]
    if mode not in ("both", "matrix", "pooled"):
        raise ConfigError("crossval_mode: must be both, matrix or pooled")
    try:
        datetime.date.fromisoformat(str(merged["start_date"]))
    except ValueError as exc:
        raise ConfigError(f"start_date: {exc}") from None

    devices = merged["devices"]
    if not isinstance(devices, list):
        raise ConfigError("devices: must be a list of device ids")

    cfg = RunConfig(
        patients=_patient_sources(merged["patients"], base_seed),
        devices=tuple(str(d) for d in devices),
        anomaly=anomaly,
        train_spans=_span_list(windows["train"], "windows.train"),
        val_spans=_span_list(windows["val"], "windows.val"),
        hyperparams=hyperparams,
        n_reps=n_reps,
        base_seed=base_seed,
        jobs=jobs,
        output_dir=str(merged["output_dir"]),
        days=days,
        start_date=str(merged["start_date"]),
        sample_interval=str(merged["sample_interval"]),
        knn_k=knn["k"],
        knn_quantile=float(knn["quantile"]),
        crossval_mode=mode,
    )
    cfg.train_spans_ms()
    cfg.val_spans_ms()
    cfg.sample_interval_ms()
    return cfg


def load_config_file(path: Path) -> dict[str, Any]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must hold a JSON object")
    return data


# Data loading ---------------------------------------------------------------

def _load_datasets(cfg: RunConfig) -> list[PatientDataset]:
    datasets = []
    for src in cfg.patients:
        if src.path is not None:
            catalog = (read_catalog_csv(src.catalog_path)
                       if src.catalog_path else default_catalog())
            readings = read_readings_csv(src.path)
            datasets.append(validate_dataset(src.patient_id, readings,
                                             catalog))
        else:
            profile = generate_profile(src.patient_id, src.seed)
            datasets.append(generate_dataset(
                profile, default_catalog(), cfg.start_ms(),
                cfg.days * DAY_MS, interval_ms=cfg.sample_interval_ms()))
    return datasets


def _resolve_devices(cfg: RunConfig, datasets: Sequence[PatientDataset]) -> list[str]:
    """Config devices, or the kind's default; always catalog-checked."""
    devices = list(cfg.devices)
    if not devices:
        devices = [DEFAULT_DEVICE_BY_KIND[cfg.anomaly.kind]]
    for ds in datasets:
        eligible = filter_eligible_devices(ds.catalog)
        for device in devices:
            if device not in eligible:
                raise ConfigError(
                    f"devices: {device!r} is not an eligible device of "
                    f"patient {ds.patient_id!r}")
    return devices


# Run directory plumbing -----------------------------------------------------

def _canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2)


def _config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(_canonical_json(cfg.to_dict()).encode()).hexdigest()


def make_run_dir(cfg: RunConfig, command: str) -> Path:
    """Create a fresh run directory; never reuses an existing one."""
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    digest = _config_digest(cfg)[:8]
    base = Path(cfg.output_dir) / f"{command}-{stamp}-{digest}"
    candidate = base
    suffix = 2
    while True:
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            candidate = base.with_name(f"{base.name}-{suffix}")
            suffix += 1


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, data: Any) -> None:
    path.write_text(_canonical_json(data) + "\n")


def _write_csv(path: Path, header: Sequence[str],
               rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_manifest(run_dir: Path, command: str, cfg: RunConfig) -> None:
    inputs = {}
    for src in cfg.patients:
        for path in (src.path, src.catalog_path):
            if path is not None:
                inputs[path] = _sha256_file(Path(path))
    _write_json(run_dir / "manifest.json", {
        "tool": "anomlab",
        "version": __version__,
        "command": command,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "base_seed": cfg.base_seed,
        "config": cfg.to_dict(),
        "config_digest": _config_digest(cfg),
        "input_digests": inputs,
    })


def _write_reports(run_dir: Path, reports: Sequence[ExperimentReport]) -> None:
    _write_json(run_dir / "report.json",
                {"reports": [report_to_dict(r) for r in reports]})
    _write_csv(run_dir / "results.csv", RESULTS_HEADER, results_rows(reports))
    _write_csv(run_dir / "summary.csv", SUMMARY_HEADER, summary_rows(reports))
    _write_csv(run_dir / "timings.csv", TIMINGS_HEADER, timing_rows(reports))


def _print_summary(reports: Sequence[ExperimentReport]) -> None:
    for r in reports:
        knn = (f"  knn={r.mean_knn_accuracy:.4f}"
               if r.mean_knn_accuracy is not None else "")
        print(f"  {r.kind:8s} {r.device_id:14s} "
              f"train={r.train_span_ms / HOUR_MS:g}h "
              f"val={r.val_span_ms / HOUR_MS:g}h "
              f"{r.patient_train}->{r.patient_val}  "
              f"mean={r.mean_accuracy:.4f}{knn}")


# Subcommands ----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, run_dir: Path) -> int:
    catalog = default_catalog()
    interval = cfg.sample_interval_ms()
    profile_rows = []
    total = 0
    for src in cfg.patients:
        if src.path is not None:
            raise ConfigError(
                "patients: synth expects (patient_id, seed) entries, "
                f"not a CSV path for {src.patient_id!r}")
        profile = generate_profile(src.patient_id, src.seed)
        dataset = generate_dataset(profile, catalog, cfg.start_ms(),
                                   cfg.days * DAY_MS, interval_ms=interval)
        write_readings_csv(run_dir / f"{src.patient_id}.csv",
                           dataset.readings)
        total += len(dataset.readings)
        profile_rows.append([
            profile.patient_id, profile.seed,
            repr(profile.wake_hour), repr(profile.sleep_hour),
            repr(profile.activity_rate), repr(profile.temperature_base),
            repr(profile.temperature_daily_amplitude),
            repr(profile.light_peak), repr(profile.noise_sigma)])
    write_catalog_csv(run_dir / "catalog.csv", catalog)
    _write_csv(run_dir / "profiles.csv",
               ["patient_id", "seed", "wake_hour", "sleep_hour",
                "activity_rate", "temperature_base",
                "temperature_daily_amplitude", "light_peak", "noise_sigma"],
               profile_rows)
    print(f"wrote {len(cfg.patients)} patients, {total} readings, "
          f"{cfg.days} days each -> {run_dir}")
    return EXIT_OK


def cmd_inject(cfg: RunConfig, run_dir: Path) -> int:
    dataset = _load_datasets(cfg)[0]
    device = _resolve_devices(cfg, [dataset])[0]
    anomaly = replace(cfg.anomaly, seed=derive_seed(cfg.base_seed, "inject"))
    labeled = inject(dataset, device, anomaly)
    write_readings_csv(run_dir / "augmented.csv", labeled.dataset.readings)
    write_labeled_csv(run_dir / "labeled.csv", labeled)
    print(f"injected {labeled.injected_count} {anomaly.kind.value} readings "
          f"into {device!r} of {dataset.patient_id} -> {run_dir}")
    return EXIT_OK


def cmd_run(cfg: RunConfig, run_dir: Path) -> int:
    dataset = _load_datasets(cfg)[0]
    device = _resolve_devices(cfg, [dataset])[0]
    report = run_repetitions(
        dataset, device, cfg.anomaly, cfg.train_spans_ms()[0],
        cfg.val_spans_ms()[0], cfg.hyperparams, n_reps=cfg.n_reps,
        base_seed=cfg.base_seed, knn_k=cfg.knn_k,
        knn_quantile=cfg.knn_quantile)
    _write_reports(run_dir, [report])
    print(f"run -> {run_dir}")
    _print_summary([report])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, run_dir: Path) -> int:
    datasets = _load_datasets(cfg)
    devices = _resolve_devices(cfg, datasets)
    reports: list[ExperimentReport] = []
    for dataset in datasets:
        for device in devices:
            reports.extend(window_sweep(
                dataset, device, cfg.anomaly, cfg.hyperparams,
                train_spans_ms=cfg.train_spans_ms(),
                val_spans_ms=cfg.val_spans_ms(),
                n_reps=cfg.n_reps,
                base_seed=derive_seed(cfg.base_seed, "sweep",
                                      dataset.patient_id, device),
                jobs=cfg.effective_jobs(), knn_k=cfg.knn_k))
    _write_reports(run_dir, reports)
    print(f"sweep: {len(reports)} cells -> {run_dir}")
    _print_summary(reports)
    return EXIT_OK


def cmd_crossval(cfg: RunConfig, run_dir: Path) -> int:
    datasets = _load_datasets(cfg)
    if len(datasets) < 2:
        raise ConfigError("patients: crossval needs at least 2 patients")
    device = _resolve_devices(cfg, datasets)[0]
    train_ms = cfg.train_spans_ms()[0]
    val_ms = cfg.val_spans_ms()[0]
    reports: list[ExperimentReport] = []
    payload: dict[str, Any] = {}

    if cfg.crossval_mode in ("both", "matrix"):
        ids, matrix, cell_reports = cross_patient_matrix(
            datasets, device, cfg.anomaly, cfg.hyperparams,
            train_span_ms=train_ms, val_span_ms=val_ms, n_reps=cfg.n_reps,
            base_seed=derive_seed(cfg.base_seed, "crossval"),
            jobs=cfg.effective_jobs())
        reports.extend(cell_reports)
        payload["matrix"] = {"patients": ids,
                             "mean_accuracy": matrix.tolist()}
        _write_csv(run_dir / "matrix.csv", ["train_patient"] + ids,
                   [[ids[i]] + [repr(v) for v in row]
                    for i, row in enumerate(matrix.tolist())])
        print(f"crossval matrix over {len(ids)} patients:")
        for i, row in enumerate(matrix.tolist()):
            cells = " ".join(f"{v:.3f}" for v in row)
            print(f"  train {ids[i]:>4s} | {cells}")

    if cfg.crossval_mode in ("both", "pooled"):
        pooled_rows = []
        payload["pooled"] = []
        for dataset in datasets:
            comparison = all_train_one_val(
                datasets, dataset.patient_id, device, cfg.anomaly,
                cfg.hyperparams, train_span_ms=train_ms, val_span_ms=val_ms,
                n_reps=cfg.n_reps,
                base_seed=derive_seed(cfg.base_seed, "pooled"))
            reports.extend([comparison.self_report,
                            comparison.pooled_report])
            payload["pooled"].append({
                "held_out": comparison.held_out,
                "self_accuracy": comparison.self_accuracy,
                "pooled_accuracy": comparison.pooled_accuracy,
            })
            pooled_rows.append([comparison.held_out,
                                repr(comparison.self_accuracy),
                                repr(comparison.pooled_accuracy)])
            print(f"  held-out {comparison.held_out}: "
                  f"self={comparison.self_accuracy:.4f} "
                  f"pooled={comparison.pooled_accuracy:.4f}")
        _write_csv(run_dir / "pooled.csv",
                   ["held_out", "self_accuracy", "pooled_accuracy"],
                   pooled_rows)

    payload["reports"] = [report_to_dict(r) for r in reports]
    _write_json(run_dir / "report.json", payload)
    _write_csv(run_dir / "results.csv", RESULTS_HEADER, results_rows(reports))
    _write_csv(run_dir / "summary.csv", SUMMARY_HEADER, summary_rows(reports))
    _write_csv(run_dir / "timings.csv", TIMINGS_HEADER, timing_rows(reports))
    print(f"crossval -> {run_dir}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, run_dir: Path) -> int:
    # Timing runs stay serial no matter what jobs says, to avoid contention.
    datasets = _load_datasets(cfg)
    dataset = datasets[0]
    eligible = filter_eligible_devices(dataset.catalog)
    train_ms = cfg.train_spans_ms()[0]
    val_ms = cfg.val_spans_ms()[0]
    rows = []
    payload = []
    print(f"bench: patient {dataset.patient_id}, "
          f"train={train_ms / HOUR_MS:g}h, {cfg.n_reps} reps per kind "
          "(jobs pinned to 1)")
    for kind in AnomalyKind:
        device = DEFAULT_DEVICE_BY_KIND[kind]
        if cfg.devices:
            compatible = [d for d in cfg.devices if d in eligible]
            if compatible:
                device = compatible[0]
        anomaly = replace(cfg.anomaly, kind=kind)
        summary = bench_training(
            dataset, device, anomaly, cfg.hyperparams,
            train_span_ms=train_ms, val_span_ms=val_ms, n_reps=cfg.n_reps,
            base_seed=derive_seed(cfg.base_seed, "bench", kind.value))
        reference = ("" if summary.reference_s is None
                     else repr(summary.reference_s))
        rows.append([kind.value, device, summary.n_reps,
                     repr(summary.mean_s), repr(summary.min_s),
                     repr(summary.max_s), reference])
        payload.append({
            "kind": kind.value, "device": device, "n_reps": summary.n_reps,
            "mean_s": summary.mean_s, "min_s": summary.min_s,
            "max_s": summary.max_s, "per_rep_s": summary.per_rep_s,
            "rpi4_reference_s": summary.reference_s,
        })
        print(f"  {kind.value:8s} {device:14s} mean={summary.mean_s:7.3f}s "
              f"min={summary.min_s:7.3f}s max={summary.max_s:7.3f}s "
              f"(edge reference {summary.reference_s}s)")
    _write_csv(run_dir / "bench.csv",
               ["kind", "device", "n_reps", "mean_s", "min_s", "max_s",
                "rpi4_reference_s"], rows)
    _write_json(run_dir / "bench.json", {"training_times": payload})
    print(f"bench -> {run_dir}")
    return EXIT_OK


def cmd_report(run_dirs: Sequence[str]) -> int:
    """Re-summarize existing run directories from their report.json."""
    for raw in run_dirs:
        path = Path(raw) / "report.json"
        data = json.loads(path.read_text())
        print(f"{raw}:")
        reports = data.get("reports", [])
        if not reports:
            print("  (no experiment reports)")
            continue
        for entry in reports:
            n = len(entry.get("repetitions", []))
            quartiles = entry.get("accuracy_quartiles", {})
            knn = entry.get("mean_knn_accuracy")
            knn_text = "" if knn is None else f"  knn={knn:.4f}"
            print(f"  {entry['kind']:8s} {entry['device']:14s} "
                  f"train={entry['train_span_h']:g}h "
                  f"val={entry['val_span_h']:g}h "
                  f"{entry['patient_train']}->{entry['patient_val']} "
                  f"reps={n} mean={entry['mean_accuracy']:.4f} "
                  f"median={quartiles.get('median', float('nan')):.4f}"
                  f"{knn_text}")
    return EXIT_OK


# Argument parsing -----------------------------------------------------------

def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", type=Path, help="JSON config file")
    sp.add_argument("--output-dir", help="directory that run dirs go under")
    sp.add_argument("--base-seed", type=int, help="root of all randomness")
    sp.add_argument("--n-reps", type=int, help="repetitions per experiment")
    sp.add_argument("--jobs", type=int,
                    help="worker processes (0 = all cores)")
    sp.add_argument("--dump-config", action="store_true",
                    help="print the resolved config and exit")


def _add_experiment_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--kind", choices=[k.value for k in AnomalyKind],
                    help="anomaly kind to inject")
    sp.add_argument("--device", action="append",
                    help="device id (repeatable)")
    sp.add_argument("--count", type=int, help="anomaly events per window")
    sp.add_argument("--train-span", action="append",
                    help="training span, e.g. 24h (repeatable)")
    sp.add_argument("--val-span", action="append",
                    help="validation span, e.g. 15min (repeatable)")
    sp.add_argument("--alpha", type=float, help="threshold coefficient")
    sp.add_argument("--knn-k", type=int, help="enable the KNN baseline")
    sp.add_argument("--days", type=int, help="days of synthetic data")
    sp.add_argument("--sample-interval",
                    help="continuous-device cadence, e.g. 60s")
    sp.add_argument("--patients", type=int,
                    help="use N synthetic patients p0..p{N-1}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomlab",
        description="Synthetic home-sensor anomaly detection experiments.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write synthetic patient CSV files")
    _add_common(sp)
    sp.add_argument("--days", type=int, help="days of data per patient")
    sp.add_argument("--start", help="first day as an ISO date (UTC)")
    sp.add_argument("--sample-interval",
                    help="continuous-device cadence, e.g. 60s")
    sp.add_argument("--patients", type=int,
                    help="use N synthetic patients p0..p{N-1}")

    sp = sub.add_parser("inject",
                        help="inject anomalies and write a labeled CSV")
    _add_common(sp)
    _add_experiment_flags(sp)
    sp.add_argument("--readings", help="input readings CSV")
    sp.add_argument("--catalog", help="catalog CSV for --readings")

    for name, help_text in [
            ("run", "one experiment: inject, train, detect, score"),
            ("sweep", "full train-span x val-span grid"),
            ("crossval", "cross-patient matrix and pooled training"),
            ("bench", "training-time benchmark per anomaly kind")]:
        sp = sub.add_parser(name, help=help_text)
        _add_common(sp)
        _add_experiment_flags(sp)
        if name == "crossval":
            sp.add_argument("--mode", choices=["both", "matrix", "pooled"],
                            help="which crossval variants to run")

    sp = sub.add_parser("report", help="re-summarize existing run dirs")
    sp.add_argument("run_dirs", nargs="+", help="run directories to read")

    return parser


def _overrides_from(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for attr, key in [("output_dir", "output_dir"),
                      ("base_seed", "base_seed"), ("n_reps", "n_reps"),
                      ("jobs", "jobs"), ("days", "days"),
                      ("start", "start_date"),
                      ("sample_interval", "sample_interval")]:
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if getattr(args, "patients", None) is not None:
        if args.patients < 1:
            raise ConfigError("--patients: must be at least 1")
        out["patients"] = [{"patient_id": f"p{i}"}
                           for i in range(args.patients)]
    if getattr(args, "readings", None) is not None:
        entry: dict[str, Any] = {"path": args.readings}
        if getattr(args, "catalog", None) is not None:
            entry["catalog"] = args.catalog
        out["patients"] = [entry]
    if getattr(args, "device", None):
        out["devices"] = list(args.device)
    anomaly: dict[str, Any] = {}
    if getattr(args, "kind", None) is not None:
        anomaly["kind"] = args.kind
    if getattr(args, "count", None) is not None:
        anomaly["count"] = args.count
    if anomaly:
        out["anomaly"] = anomaly
    if getattr(args, "alpha", None) is not None:
        out["hyperparams"] = {"alpha": args.alpha}
    windows: dict[str, Any] = {}
    if getattr(args, "train_span", None):
        windows["train"] = list(args.train_span)
    if getattr(args, "val_span", None):
        windows["val"] = list(args.val_span)
    if windows:
        out["windows"] = windows
    if getattr(args, "knn_k", None) is not None:
        out["knn"] = {"k": args.knn_k}
    if getattr(args, "mode", None) is not None:
        out["crossval_mode"] = args.mode
    return out


def _merge_section(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if (isinstance(value, dict) and isinstance(merged.get(key), dict)):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


COMMANDS = {
    "synth": cmd_synth,
    "inject": cmd_inject,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "crossval": cmd_crossval,
    "bench": cmd_bench,
}


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        try:
            return cmd_report(args.run_dirs)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            return _fail(exc, EXIT_INPUT)
    try:
        raw = load_config_file(args.config) if args.config else {}
        raw = _merge_section(raw, _overrides_from(args))
        cfg = resolve_config(raw)
        if args.dump_config:
            print(_canonical_json(cfg.to_dict()))
            return EXIT_OK
        run_dir = make_run_dir(cfg, args.command)
        write_manifest(run_dir, args.command, cfg)
        return COMMANDS[args.command](cfg, run_dir)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (OSError, NonFiniteLoss) as exc:
        return _fail(exc, EXIT_INPUT if isinstance(exc, OSError)
                     else EXIT_DATA)
    except (InsufficientData, InsufficientSpan, EmptyWindow, EmptyEvaluation,
            KTooLarge) as exc:
        return _fail(exc, EXIT_DATA)
    except AnomlabError as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
