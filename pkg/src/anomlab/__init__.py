"""Anomaly injection and locally trained detection for home-IoT time series."""

from .detector import (Hyperparams, MlpParams, TrainedModel, detect,
                       forward, init_params, knn_detect, load_model,
                       save_model, threshold, train)
from .domain import (Catalog, DeviceSpec, FunctionClass, PatientDataset,
                     Reading, ValueFormat, default_catalog,
                     filter_eligible_devices, make_catalog, validate_dataset)
from .evaluate import (ConfusionCounts, ExperimentReport, accuracy,
                       all_train_one_val, bench_training, confusion,
                       cross_patient_matrix, run_repetitions, window_sweep)
from .inject import (AnomalyConfig, AnomalyKind, LabeledDataset, inject,
                     label_clean)
from .pipeline import (FeatureRow, Normalizer, SupervisedBatch, WindowSpec,
                       apply_normalizer, concat_patients, featurize,
                       fit_normalizer, make_supervised, slice_window)
from .synth import PatientProfile, generate_dataset, generate_profile

__version__ = "0.1.0"

__all__ = [
    "AnomalyConfig", "AnomalyKind", "Catalog", "ConfusionCounts",
    "DeviceSpec", "ExperimentReport", "FeatureRow", "FunctionClass",
    "Hyperparams", "LabeledDataset", "MlpParams", "Normalizer",
    "PatientDataset", "PatientProfile", "Reading", "SupervisedBatch",
    "TrainedModel", "ValueFormat", "WindowSpec", "accuracy",
    "all_train_one_val", "apply_normalizer", "bench_training", "concat_patients",
    "confusion", "cross_patient_matrix", "default_catalog", "detect",
    "featurize", "filter_eligible_devices", "fit_normalizer", "forward",
    "generate_dataset", "generate_profile", "init_params", "inject",
    "knn_detect", "label_clean", "load_model", "make_catalog",
    "make_supervised", "run_repetitions", "save_model", "slice_window",
    "threshold", "train", "validate_dataset", "window_sweep",
]
