"""Shared test utilities: independent oracles and tiny dataset builders."""

from __future__ import annotations

import numpy as np

from anomlab.detector import MlpParams, forward
from anomlab.domain import (DeviceSpec, FunctionClass, Reading, ValueFormat,
                            make_catalog, validate_dataset)

HOUR_MS = 3_600_000


def numeric_gradients(params: MlpParams, x, y: float, step: float = 1e-5):
    """Central finite differences of the squared error, entry by entry.

    This deliberately knows nothing about the backward pass; it only calls
    the forward function, so it is an independent check of loss_gradients.
    """
    def loss(p: MlpParams) -> float:
        err = forward(p, x) - y
        return err * err

    gw1 = np.zeros_like(params.w1)
    for i in range(params.w1.shape[0]):
        for j in range(params.w1.shape[1]):
            up = params.w1.copy()
            dn = params.w1.copy()
            up[i, j] += step
            dn[i, j] -= step
            gw1[i, j] = (loss(MlpParams(up, params.b1, params.w2, params.b2))
                         - loss(MlpParams(dn, params.b1, params.w2,
                                          params.b2))) / (2 * step)
    gb1 = np.zeros_like(params.b1)
    for i in range(params.b1.shape[0]):
        up = params.b1.copy()
        dn = params.b1.copy()
        up[i] += step
        dn[i] -= step
        gb1[i] = (loss(MlpParams(params.w1, up, params.w2, params.b2))
                  - loss(MlpParams(params.w1, dn, params.w2,
                                   params.b2))) / (2 * step)
    gw2 = np.zeros_like(params.w2)
    for i in range(params.w2.shape[0]):
        up = params.w2.copy()
        dn = params.w2.copy()
        up[i] += step
        dn[i] -= step
        gw2[i] = (loss(MlpParams(params.w1, params.b1, up, params.b2))
                  - loss(MlpParams(params.w1, params.b1, dn,
                                   params.b2))) / (2 * step)
    gb2 = (loss(MlpParams(params.w1, params.b1, params.w2, params.b2 + step))
           - loss(MlpParams(params.w1, params.b1, params.w2,
                            params.b2 - step))) / (2 * step)
    return gw1, gb1, gw2, float(gb2)


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=float)
        n = np.asarray(n, dtype=float)
        denom = np.maximum(np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def draw_safe_params(rng: np.random.Generator, x, hidden: int = 8,
                     margin: float = 1e-3) -> MlpParams:
    """Random params whose hidden pre-activations stay clear of the relu kink
    at the probe input, so finite differences are well defined there."""
    while True:
        params = MlpParams(
            w1=rng.normal(size=(hidden, 2)),
            b1=rng.normal(size=hidden),
            w2=rng.normal(size=hidden),
            b2=float(rng.normal()),
        )
        z = params.w1 @ np.asarray(x, dtype=float) + params.b1
        if np.all(np.abs(z) > margin):
            return params


# Hand-built datasets --------------------------------------------------------

def float_catalog(device_id: str = "t"):
    return make_catalog([DeviceSpec(device_id, FunctionClass.TEMPERATURE,
                                    ValueFormat.FLOAT, True)])


def binary_catalog(device_id: str = "b"):
    return make_catalog([DeviceSpec(device_id, FunctionClass.LOCATION,
                                    ValueFormat.BINARY, False)])


def integer_catalog(device_id: str = "n"):
    return make_catalog([DeviceSpec(device_id, FunctionClass.LIGHT,
                                    ValueFormat.INTEGER, True)])


def ramp_dataset(n: int = 120, step_ms: int = 60_000, device_id: str = "t",
                 base: float = 20.0, slope: float = 0.01,
                 patient_id: str = "px"):
    """A smooth float series: base + slope*i at regular timestamps."""
    readings = [Reading(i * step_ms, device_id, base + slope * i)
                for i in range(n)]
    return validate_dataset(patient_id, readings, float_catalog(device_id))


def toggle_dataset(n: int = 80, step_ms: int = 60_000, device_id: str = "b",
                   patient_id: str = "px"):
    """A binary series alternating 1, 0, 1, 0 at regular timestamps."""
    readings = [Reading(i * step_ms, device_id, float(i % 2 == 0))
                for i in range(n)]
    return validate_dataset(patient_id, readings, binary_catalog(device_id))
