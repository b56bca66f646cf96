"""Device catalog, reading records, and dataset validation.

A patient dataset is a time-ordered list of readings from the devices of a
single smart household.  The default catalog mirrors a typical assisted-living
deployment: room presence sensors, door sensors, appliance plugs, temperature
probes, spot health measurements, a light sensor, and a sleep mat.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormatViolation, UnknownDevice


class FunctionClass(str, Enum):
    LOCATION = "Location"
    DOOR = "Door"
    APPLIANCE = "Appliance"
    TEMPERATURE = "Temperature"
    HEALTH_RELATED = "HealthRelated"
    LIGHT = "Light"
    SLEEP_EVENT = "SleepEvent"


class ValueFormat(str, Enum):
    BINARY = "Binary"
    FLOAT = "Float"
    INTEGER = "Integer"


@dataclass(frozen=True)
class DeviceSpec:
    """Static description of one device in the household."""

    device_id: str
    function_class: FunctionClass
    value_format: ValueFormat
    continuous: bool


@dataclass(frozen=True)
class Reading:
    """One timestamped sample from one device."""

    timestamp_ms: int
    device_id: str
    value: float


@dataclass
class PatientDataset:
    """Validated, time-sorted readings for a single patient."""

    patient_id: str
    readings: list[Reading]
    catalog: dict[str, DeviceSpec] = field(repr=False)

    def device_readings(self, device_id: str) -> list[Reading]:
        return [r for r in self.readings if r.device_id == device_id]


Catalog = dict[str, DeviceSpec]


def make_catalog(specs: Iterable[DeviceSpec]) -> Catalog:
    """Index specs by device id, rejecting duplicates."""
    catalog: Catalog = {}
    for spec in specs:
        if spec.device_id in catalog:
            raise ValueError(f"duplicate device id {spec.device_id!r}")
        catalog[spec.device_id] = spec
    return catalog


def _group(names: Iterable[str], fn: FunctionClass, fmt: ValueFormat,
           continuous: bool) -> list[DeviceSpec]:
    return [DeviceSpec(n, fn, fmt, continuous) for n in names]


def default_catalog() -> Catalog:
    """The full default household catalog."""
    specs: list[DeviceSpec] = []
    specs += _group(
        ["WC", "bathroom", "bedroom", "corridor", "dining room", "hallway",
         "kitchen", "living room", "lounge", "office", "study"],
        FunctionClass.LOCATION, ValueFormat.BINARY, continuous=False)
    specs += _group(
        ["back door", "conservatory", "fridge door", "front door", "garage",
         "main door", "secondary", "utility"],
        FunctionClass.DOOR, ValueFormat.BINARY, continuous=True)
    specs += _group(
        ["iron use", "kettle use", "microwave use", "socket use",
         "toaster use"],
        FunctionClass.APPLIANCE, ValueFormat.BINARY, continuous=False)
    specs += _group(
        ["temperature", "body temperature", "skin temperature"],
        FunctionClass.TEMPERATURE, ValueFormat.FLOAT, continuous=True)
    specs += _group(
        ["blood pressure", "body mass index", "body muscle mass",
         "body weight", "heart rate", "body fat", "body water", "bone mass"],
        FunctionClass.HEALTH_RELATED, ValueFormat.FLOAT, continuous=False)
    specs += _group(
        ["light level"], FunctionClass.LIGHT, ValueFormat.INTEGER,
        continuous=True)
    specs += _group(
        ["sleep event", "sleep mat snoring"],
        FunctionClass.SLEEP_EVENT, ValueFormat.BINARY, continuous=False)
    specs += _group(
        ["sleep mat heart rate", "sleep mat respiratory rate"],
        FunctionClass.SLEEP_EVENT, ValueFormat.FLOAT, continuous=True)
    specs += _group(
        ["sleep mat state", "agitation"],
        FunctionClass.SLEEP_EVENT, ValueFormat.INTEGER, continuous=False)
    return make_catalog(specs)


# Spot measurements taken rarely (a few samples per day at best).  Series this
# sparse cannot support windowed one-step-ahead modeling, so experiment
# tooling drops them up front.
RARE_MEASUREMENT_DEVICES = frozenset({
    "blood pressure",
    "body temperature",
    "body weight",
    "body mass index",
    "body muscle mass",
    "body fat",
    "body water",
    "bone mass",
})


def filter_eligible_devices(catalog: Catalog) -> Catalog:
    """Drop devices too sparse to model.  Idempotent."""
    return {did: spec for did, spec in catalog.items()
            if did not in RARE_MEASUREMENT_DEVICES}


def _check_value(spec: DeviceSpec, reading: Reading, index: int) -> None:
    v = reading.value
    if spec.value_format is ValueFormat.BINARY:
        if v not in (0.0, 1.0):
            raise FormatViolation(
                f"reading {index}: device {spec.device_id!r} is Binary "
                f"but value is {v!r}")
    elif spec.value_format is ValueFormat.INTEGER:
        if not float(v).is_integer():
            raise FormatViolation(
                f"reading {index}: device {spec.device_id!r} is Integer "
                f"but value is {v!r}")


def validate_dataset(patient_id: str, readings: Iterable[Reading],
                     catalog: Catalog) -> PatientDataset:
    """Check readings against the catalog and sort them by timestamp.

    The sort is stable: readings with equal timestamps keep their input
    order.  Raises UnknownDevice or FormatViolation on the first offending
    reading (by input position).
    """
    rows = list(readings)
    for i, reading in enumerate(rows):
        spec = catalog.get(reading.device_id)
        if spec is None:
            raise UnknownDevice(
                f"reading {i}: unknown device {reading.device_id!r}")
        _check_value(spec, reading, i)
    rows.sort(key=lambda r: r.timestamp_ms)
    return PatientDataset(patient_id=patient_id, readings=rows,
                          catalog=dict(catalog))


# CSV interchange ------------------------------------------------------------

READINGS_HEADER = ["timestamp_ms", "device_id", "value"]
CATALOG_HEADER = ["device_id", "function_class", "value_format", "continuous"]


def write_readings_csv(path: str | Path, readings: Iterable[Reading]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(READINGS_HEADER)
        for r in readings:
            writer.writerow([r.timestamp_ms, r.device_id, repr(r.value)])


def read_readings_csv(path: str | Path) -> list[Reading]:
    readings: list[Reading] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != READINGS_HEADER:
            raise ValueError(f"{path}: expected header {READINGS_HEADER}, "
                             f"got {header}")
        for row in reader:
            if not row:
                continue
            ts, device_id, value = row
            readings.append(Reading(int(ts), device_id, float(value)))
    return readings


def write_catalog_csv(path: str | Path, catalog: Mapping[str, DeviceSpec]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CATALOG_HEADER)
        for spec in catalog.values():
            writer.writerow([spec.device_id, spec.function_class.value,
                             spec.value_format.value,
                             "true" if spec.continuous else "false"])


def read_catalog_csv(path: str | Path) -> Catalog:
    specs: list[DeviceSpec] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CATALOG_HEADER:
            raise ValueError(f"{path}: expected header {CATALOG_HEADER}, "
                             f"got {header}")
        for row in reader:
            if not row:
                continue
            device_id, fn, fmt, cont = row
            if cont not in ("true", "false"):
                raise ValueError(f"{path}: bad continuous flag {cont!r}")
            specs.append(DeviceSpec(device_id, FunctionClass(fn),
                                    ValueFormat(fmt), cont == "true"))
    return make_catalog(specs)
