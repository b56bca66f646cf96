"""A small one-step-ahead predictor and threshold-based anomaly flagging.

The model is deliberately tiny so it can train on constrained hardware: a
two-layer perceptron (2 inputs, one hidden ReLU layer, scalar output) fitted
with vanilla SGD on squared error.  The detection threshold is a multiple of
the mean training loss over the final epoch, so a validation sample is
flagged exactly when its squared prediction error exceeds what training
considered normal by that factor.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import KTooLarge, NonFiniteLoss
from .pipeline import Normalizer, SupervisedBatch

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 3e-5
    batch_size: int = 1
    epochs: int = 100
    hidden_units: int = 32
    alpha: float = 6.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be at least 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass
class MlpParams:
    """Weights of the two-layer perceptron."""

    w1: np.ndarray   # (hidden, 2)
    b1: np.ndarray   # (hidden,)
    w2: np.ndarray   # (hidden,)
    b2: float

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                         self.b2)


def _draw_params(rng: np.random.Generator, hidden_units: int) -> MlpParams:
    bound1 = 1.0 / math.sqrt(2.0)
    bound2 = 1.0 / math.sqrt(hidden_units)
    return MlpParams(
        w1=rng.uniform(-bound1, bound1, (hidden_units, 2)),
        b1=rng.uniform(-bound1, bound1, hidden_units),
        w2=rng.uniform(-bound2, bound2, hidden_units),
        b2=float(rng.uniform(-bound2, bound2)),
    )


def init_params(hp: Hyperparams) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, fully seeded."""
    return _draw_params(np.random.default_rng(hp.seed), hp.hidden_units)


def forward(params: MlpParams, x: Sequence[float]) -> float:
    """Prediction for a single (value, delta_t) input."""
    z = params.w1 @ np.asarray(x, dtype=np.float64) + params.b1
    return float(params.w2 @ np.maximum(z, 0.0) + params.b2)


def forward_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    z = x @ params.w1.T + params.b1
    return np.maximum(z, 0.0) @ params.w2 + params.b2


def loss_gradients(params: MlpParams, x: Sequence[float],
                   y: float) -> MlpParams:
    """Analytic gradient of the squared error on one sample."""
    xv = np.asarray(x, dtype=np.float64)
    z = params.w1 @ xv + params.b1
    hidden = np.maximum(z, 0.0)
    yhat = float(params.w2 @ hidden + params.b2)
    g = 2.0 * (yhat - y)
    gz = g * params.w2
    gz = np.where(z > 0.0, gz, 0.0)
    return MlpParams(
        w1=np.outer(gz, xv),
        b1=gz,
        w2=g * hidden,
        b2=g,
    )


@dataclass
class TrainedModel:
    """Fitted parameters plus everything detection and reporting need."""

    params: MlpParams
    hyperparams: Hyperparams
    per_epoch_mean_loss: list[float]
    last_epoch_losses: np.ndarray = field(repr=False)
    mean_last_epoch_loss: float = 0.0
    train_wall_time_s: float = 0.0
    normalizer: Normalizer | None = None


def _train_sample_at_a_time(params: MlpParams, x: np.ndarray, y: np.ndarray,
                            hp: Hyperparams,
                            rng: np.random.Generator) -> tuple[list[float], np.ndarray]:
    """Hot path for batch_size=1; returns per-epoch means and last-epoch losses."""
    lr = hp.learning_rate
    w1, b1, w2 = params.w1, params.b1, params.w2
    b2 = params.b2
    w1c0, w1c1 = w1[:, 0], w1[:, 1]
    x0, x1 = x[:, 0], x[:, 1]
    n = len(y)
    per_epoch: list[float] = []
    epoch_losses = np.empty(n)
    for epoch in range(hp.epochs):
        perm = rng.permutation(n)
        for j, i in enumerate(perm):
            xi0 = x0[i]
            xi1 = x1[i]
            z = w1c0 * xi0 + w1c1 * xi1 + b1
            hidden = np.maximum(z, 0.0)
            yhat = hidden @ w2 + b2
            err = yhat - y[i]
            epoch_losses[j] = err * err
            g = 2.0 * err
            gz = np.where(z > 0.0, g * w2, 0.0)
            w2 -= (lr * g) * hidden
            b2 -= lr * g
            w1c0 -= (lr * xi0) * gz
            w1c1 -= (lr * xi1) * gz
            b1 -= lr * gz
        mean_loss = float(np.mean(epoch_losses))
        if not math.isfinite(mean_loss):
            raise NonFiniteLoss(f"non-finite training loss in epoch {epoch}")
        per_epoch.append(mean_loss)
    params.b2 = float(b2)
    return per_epoch, epoch_losses.copy()


def _train_batched(params: MlpParams, x: np.ndarray, y: np.ndarray,
                   hp: Hyperparams,
                   rng: np.random.Generator) -> tuple[list[float], np.ndarray]:
    lr = hp.learning_rate
    n = len(y)
    per_epoch: list[float] = []
    batch_losses: list[float] = []
    for epoch in range(hp.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, hp.batch_size):
            idx = perm[start:start + hp.batch_size]
            xb, yb = x[idx], y[idx]
            z = xb @ params.w1.T + params.b1
            hidden = np.maximum(z, 0.0)
            yhat = hidden @ params.w2 + params.b2
            err = yhat - yb
            batch_losses.append(float(np.mean(err * err)))
            g = (2.0 / len(idx)) * err
            gz = np.where(z > 0.0, g[:, None] * params.w2, 0.0)
            params.w2 -= lr * (hidden.T @ g)
            params.b2 -= lr * float(np.sum(g))
            params.w1 -= lr * (gz.T @ xb)
            params.b1 -= lr * np.sum(gz, axis=0)
        mean_loss = float(np.mean(batch_losses))
        if not math.isfinite(mean_loss):
            raise NonFiniteLoss(f"non-finite training loss in epoch {epoch}")
        per_epoch.append(mean_loss)
    return per_epoch, np.array(batch_losses)


def train(batch: SupervisedBatch, hp: Hyperparams,
          normalizer: Normalizer | None = None) -> TrainedModel:
    """Fit the perceptron with vanilla SGD.

    One seeded generator drives everything in a fixed order: weight init
    first, then one fresh permutation per epoch.  Identical inputs therefore
    give bit-identical models.
    """
    if len(batch) < 1:
        raise ValueError("cannot train on an empty batch")
    rng = np.random.default_rng(hp.seed)
    params = _draw_params(rng, hp.hidden_units)
    x = np.ascontiguousarray(batch.x, dtype=np.float64)
    y = np.ascontiguousarray(batch.y, dtype=np.float64)
    started = time.perf_counter()
    if hp.batch_size == 1:
        per_epoch, last_losses = _train_sample_at_a_time(params, x, y, hp, rng)
    else:
        per_epoch, last_losses = _train_batched(params, x, y, hp, rng)
    elapsed = time.perf_counter() - started
    return TrainedModel(
        params=params,
        hyperparams=hp,
        per_epoch_mean_loss=per_epoch,
        last_epoch_losses=last_losses,
        mean_last_epoch_loss=per_epoch[-1],
        train_wall_time_s=elapsed,
        normalizer=normalizer,
    )


def threshold(model: TrainedModel, alpha: float) -> float:
    """Detection threshold: alpha times the mean final-epoch training loss."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return alpha * model.mean_last_epoch_loss


def prediction_losses(model: TrainedModel, batch: SupervisedBatch) -> np.ndarray:
    """Per-sample squared prediction error."""
    err = forward_batch(model.params, batch.x) - batch.y
    return err * err


def detect(model: TrainedModel, thr: float,
           batch: SupervisedBatch) -> np.ndarray:
    """Flag samples whose loss strictly exceeds the threshold."""
    return prediction_losses(model, batch) > thr


# KNN baseline ---------------------------------------------------------------

def _points3(batch: SupervisedBatch) -> np.ndarray:
    return np.column_stack([batch.x[:, 0], batch.x[:, 1], batch.y])


def _chunked_knn_scores(query: np.ndarray, train: np.ndarray, k: int,
                        exclude_self: bool) -> np.ndarray:
    """Mean Euclidean distance to the k nearest training points."""
    scores = np.empty(len(query))
    chunk = 512
    for start in range(0, len(query), chunk):
        stop = min(start + chunk, len(query))
        diff = query[start:stop, None, :] - train[None, :, :]
        dists = np.sqrt(np.sum(diff * diff, axis=2))
        if exclude_self:
            for row, i in enumerate(range(start, stop)):
                dists[row, i] = np.inf
        nearest = np.partition(dists, k - 1, axis=1)[:, :k]
        scores[start:stop] = np.mean(nearest, axis=1)
    return scores


def knn_detect(train: SupervisedBatch, val: SupervisedBatch, k: int,
               quantile: float = 0.99) -> np.ndarray:
    """Distance-based baseline over (value, delta_t, target) points.

    A validation point is flagged when its mean distance to the k nearest
    training points strictly exceeds the given quantile of the training
    set's own leave-one-out scores.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must be in (0, 1]")
    n = len(train)
    if k >= n:
        raise KTooLarge(
            f"k={k} needs at least {k + 1} training points for "
            f"leave-one-out scoring, got {n}")
    train_pts = _points3(train)
    val_pts = _points3(val)
    self_scores = _chunked_knn_scores(train_pts, train_pts, k,
                                      exclude_self=True)
    thr = float(np.quantile(self_scores, quantile))
    val_scores = _chunked_knn_scores(val_pts, train_pts, k,
                                     exclude_self=False)
    return val_scores > thr


# Serialization --------------------------------------------------------------

def save_model(model: TrainedModel, path: str | Path) -> None:
    """Write the model as JSON; float repr round-trips bit-exactly."""
    hp = model.hyperparams
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "hyperparams": {
            "learning_rate": hp.learning_rate,
            "batch_size": hp.batch_size,
            "epochs": hp.epochs,
            "hidden_units": hp.hidden_units,
            "alpha": hp.alpha,
            "seed": hp.seed,
        },
        "normalizer": None if model.normalizer is None else {
            "value_min": model.normalizer.value_min,
            "value_max": model.normalizer.value_max,
            "delta_t_max": model.normalizer.delta_t_max,
        },
        "params": {
            "w1": model.params.w1.tolist(),
            "b1": model.params.b1.tolist(),
            "w2": model.params.w2.tolist(),
            "b2": model.params.b2,
        },
        "per_epoch_mean_loss": model.per_epoch_mean_loss,
        "last_epoch_losses": model.last_epoch_losses.tolist(),
        "mean_last_epoch_loss": model.mean_last_epoch_loss,
        "train_wall_time_s": model.train_wall_time_s,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> TrainedModel:
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    hp = Hyperparams(**payload["hyperparams"])
    norm = payload["normalizer"]
    normalizer = None if norm is None else Normalizer(**norm)
    params = MlpParams(
        w1=np.array(payload["params"]["w1"], dtype=np.float64),
        b1=np.array(payload["params"]["b1"], dtype=np.float64),
        w2=np.array(payload["params"]["w2"], dtype=np.float64),
        b2=float(payload["params"]["b2"]),
    )
    return TrainedModel(
        params=params,
        hyperparams=hp,
        per_epoch_mean_loss=list(payload["per_epoch_mean_loss"]),
        last_epoch_losses=np.array(payload["last_epoch_losses"],
                                   dtype=np.float64),
        mean_last_epoch_loss=float(payload["mean_last_epoch_loss"]),
        train_wall_time_s=float(payload["train_wall_time_s"]),
        normalizer=normalizer,
    )
