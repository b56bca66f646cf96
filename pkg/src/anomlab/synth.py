"""Synthetic patient data with learnable daily routines.

Each patient gets a deterministic profile drawn from (patient_id, seed).
Binary devices fire as a piecewise-constant-rate Poisson process that is much
busier during waking hours; every arrival emits an on reading and a matching
off reading after a dwell time.  Value devices follow a diurnal sinusoid plus
Gaussian noise, sampled on a regular grid.

Every random stream is keyed by (seed, patient_id, device_id), so regenerating
any subset of devices, in any order, yields byte-identical readings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (Catalog, FunctionClass, PatientDataset, Reading,
                     ValueFormat, validate_dataset)
from .errors import EmptyCatalog
from .seeding import rng_for

HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS

# Sampling cadence for value devices.
CONTINUOUS_INTERVAL_MS = 60_000          # streaming devices: one reading/min
SPOT_INTERVAL_MS = 6 * HOUR_MS           # spot-measurement devices

# On-duration of a binary activation, drawn uniformly per arrival.
DWELL_MIN_MS = 30_000
DWELL_MAX_MS = 600_000

# Nighttime arrival rate divisor: sleeping activity is 20x rarer.
SLEEP_RATE_DIVISOR = 20.0

# Doors see far fewer activations than rooms see presence events.
DOOR_RATE_DIVISOR = 2.0


@dataclass(frozen=True)
class PatientProfile:
    """Deterministic behavioral parameters for one synthetic patient."""

    patient_id: str
    seed: int
    wake_hour: float            # start of the active day, [5, 10)
    sleep_hour: float           # end of the active day, [20, 24)
    activity_rate: float        # waking arrivals per hour per binary device
    temperature_base: float     # degrees C
    temperature_daily_amplitude: float
    light_peak: float           # lux-like full-scale value
    noise_sigma: float          # Gaussian noise on value devices

    def __post_init__(self) -> None:
        if not self.wake_hour < self.sleep_hour:
            raise ValueError("wake_hour must precede sleep_hour")
        if self.activity_rate <= 0:
            raise ValueError("activity_rate must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def generate_profile(patient_id: str, seed: int) -> PatientProfile:
    """Draw a profile; the same (patient_id, seed) always yields the same one."""
    rng = rng_for(seed, patient_id, "profile")
    return PatientProfile(
        patient_id=patient_id,
        seed=seed,
        wake_hour=float(rng.uniform(5.0, 10.0)),
        sleep_hour=float(rng.uniform(20.0, 24.0)),
        activity_rate=float(rng.uniform(2.0, 6.0)),
        temperature_base=float(rng.uniform(18.0, 24.0)),
        temperature_daily_amplitude=float(rng.uniform(1.5, 3.0)),
        light_peak=float(np.round(rng.uniform(200.0, 800.0))),
        noise_sigma=float(rng.uniform(0.05, 0.15)),
    )


def _hour_of_day(timestamp_ms: float) -> float:
    return (timestamp_ms % DAY_MS) / HOUR_MS


def _is_waking(profile: PatientProfile, timestamp_ms: float) -> bool:
    return profile.wake_hour <= _hour_of_day(timestamp_ms) < profile.sleep_hour


def _next_rate_boundary(profile: PatientProfile, timestamp_ms: int) -> int:
    """First future instant at which the arrival rate changes."""
    day_start = (timestamp_ms // DAY_MS) * DAY_MS
    for hour in (profile.wake_hour, profile.sleep_hour):
        boundary = day_start + int(hour * HOUR_MS)
        if boundary > timestamp_ms:
            return boundary
    return day_start + DAY_MS + int(profile.wake_hour * HOUR_MS)


def _activation_intervals(profile: PatientProfile, device_id: str,
                          base_rate: float, start_ms: int,
                          end_ms: int) -> list[tuple[int, int]]:
    """Poisson [on, off) activations with a 20x quieter sleeping period."""
    rng = rng_for(profile.seed, profile.patient_id, device_id)
    sleep_rate = base_rate / SLEEP_RATE_DIVISOR
    intervals: list[tuple[int, int]] = []
    t = start_ms
    while t < end_ms:
        rate = base_rate if _is_waking(profile, t) else sleep_rate
        boundary = min(_next_rate_boundary(profile, t), end_ms)
        gap_ms = rng.exponential(1.0 / rate) * HOUR_MS
        arrival = t + gap_ms
        if arrival >= boundary:
            # No arrival in this constant-rate segment; the process is
            # memoryless, so restart cleanly at the boundary.
            t = boundary
            continue
        on_ts = int(arrival)
        dwell = int(rng.uniform(DWELL_MIN_MS, DWELL_MAX_MS))
        intervals.append((on_ts, on_ts + dwell))
        # Next gap starts once the activation ends, so intervals never overlap.
        t = on_ts + dwell
    return intervals


def _binary_rate(profile: PatientProfile, spec) -> float:
    if spec.function_class is FunctionClass.DOOR:
        return profile.activity_rate / DOOR_RATE_DIVISOR
    return profile.activity_rate


def _event_readings(profile: PatientProfile, spec, start_ms: int,
                    end_ms: int) -> list[Reading]:
    """Transition stream: a 1 at each activation start, a 0 at its end."""
    readings: list[Reading] = []
    for on_ts, off_ts in _activation_intervals(
            profile, spec.device_id, _binary_rate(profile, spec),
            start_ms, end_ms):
        readings.append(Reading(on_ts, spec.device_id, 1.0))
        if off_ts < end_ms:
            readings.append(Reading(off_ts, spec.device_id, 0.0))
    return readings


def _state_readings(profile: PatientProfile, spec, start_ms: int,
                    end_ms: int, interval_ms: int) -> list[Reading]:
    """Regularly sampled 0/1 state for continuously reporting binary devices."""
    intervals = _activation_intervals(
        profile, spec.device_id, _binary_rate(profile, spec),
        start_ms, end_ms)
    readings: list[Reading] = []
    idx = 0
    active_until = -1
    for ts in range(start_ms, end_ms, interval_ms):
        while idx < len(intervals) and intervals[idx][0] <= ts:
            active_until = max(active_until, intervals[idx][1])
            idx += 1
        readings.append(Reading(ts, spec.device_id,
                                1.0 if ts < active_until else 0.0))
    return readings


def _waveform(profile: PatientProfile, spec) -> tuple[float, float]:
    """(base, amplitude) of the diurnal sinusoid for a value device."""
    if spec.function_class is FunctionClass.TEMPERATURE:
        return profile.temperature_base, profile.temperature_daily_amplitude
    if spec.function_class is FunctionClass.LIGHT:
        return profile.light_peak / 2.0, profile.light_peak / 2.0
    # Vitals-like channels get their own per-device scale.
    rng = rng_for(profile.seed, profile.patient_id, spec.device_id, "waveform")
    return float(rng.uniform(40.0, 80.0)), float(rng.uniform(2.0, 8.0))


def _value_readings(profile: PatientProfile, spec, start_ms: int,
                    end_ms: int, interval_ms: int) -> list[Reading]:
    base, amplitude = _waveform(profile, spec)
    rng = rng_for(profile.seed, profile.patient_id, spec.device_id)
    timestamps = np.arange(start_ms, end_ms, interval_ms, dtype=np.int64)
    phase = 2.0 * math.pi * ((timestamps % DAY_MS) / HOUR_MS
                             - profile.wake_hour) / 24.0
    values = base + amplitude * np.sin(phase)
    values = values + rng.normal(0.0, profile.noise_sigma, len(timestamps))
    lo = base - amplitude - 6.0 * profile.noise_sigma
    hi = base + amplitude + 6.0 * profile.noise_sigma
    values = np.clip(values, lo, hi)
    if spec.value_format is ValueFormat.INTEGER:
        values = np.rint(values)
    return [Reading(int(ts), spec.device_id, float(v))
            for ts, v in zip(timestamps, values)]


def generate_dataset(profile: PatientProfile, catalog: Catalog,
                     start_ms: int, duration_ms: int,
                     interval_ms: int = CONTINUOUS_INTERVAL_MS) -> PatientDataset:
    """Generate a validated dataset covering [start_ms, start_ms + duration_ms).

    interval_ms sets the sampling cadence of continuously reporting devices;
    spot-check devices keep their own slow schedule regardless.
    """
    if not catalog:
        raise EmptyCatalog("cannot generate data for an empty catalog")
    if duration_ms <= 0:
        raise ValueError("duration_ms must be positive")
    if interval_ms <= 0:
        raise ValueError("interval_ms must be positive")
    end_ms = start_ms + duration_ms
    readings: list[Reading] = []
    for device_id in sorted(catalog):
        spec = catalog[device_id]
        if spec.value_format is ValueFormat.BINARY:
            if spec.continuous:
                readings.extend(_state_readings(
                    profile, spec, start_ms, end_ms, interval_ms))
            else:
                readings.extend(
                    _event_readings(profile, spec, start_ms, end_ms))
        else:
            step = interval_ms if spec.continuous else SPOT_INTERVAL_MS
            readings.extend(
                _value_readings(profile, spec, start_ms, end_ms, step))
    return validate_dataset(profile.patient_id, readings, catalog)
