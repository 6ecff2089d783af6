"""Statistical and event-based window features, and the three shipped configurations."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, ParseError, SchemaError

TRANSFORMS = ("mean", "variance", "stddev", "range", "first", "first_derivative")


def transform(series, kind: str) -> float:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise InvalidArgument("empty series")
    if kind == "mean":
        return float(np.mean(x))
    if kind == "variance":
        return float(np.var(x))
    if kind == "stddev":
        return float(np.sqrt(np.var(x)))
    if kind == "range":
        return float(np.max(x) - np.min(x))
    if kind == "first":
        return float(x[0])
    if kind == "first_derivative":
        # mean first difference per sample
        return float(np.mean(np.diff(x))) if x.size > 1 else 0.0
    raise InvalidArgument(f"unknown transform {kind!r}")


def overspeed_count(speed, limit, per_sample: bool = False) -> int:
    """Number of overspeed episodes (rising edges of ``speed > limit``)."""
    speed = np.asarray(speed, dtype=float)
    limit = np.asarray(limit, dtype=float)
    if speed.shape != limit.shape:
        raise InvalidArgument("speed and limit differ in length")
    over = speed > limit
    if per_sample:
        return int(over.sum())
    if over.size == 0:
        return 0
    rising = over[1:] & ~over[:-1]
    return int(over[0]) + int(rising.sum())


def split_accel_brake(axis_series) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(axis_series, dtype=float)
    return np.maximum(x, 0.0), np.maximum(-x, 0.0)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    channel: str
    transform: str


@dataclass(frozen=True)
class FeatureConfig:
    name: str
    entries: tuple[FeatureSpec, ...]
    per_sample_overspeed: bool = False

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise InvalidArgument(f"duplicate feature names in {self.name}")

    @property
    def feature_names(self) -> list[str]:
        return [e.name for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


_AXES = ("x", "y", "z")


def _entries(*groups) -> tuple[FeatureSpec, ...]:
    return tuple(FeatureSpec(*g) for g in groups)


CONFIGS = {
    "config1": FeatureConfig("config1", _entries(
        ("distance", "obstacle_distance", "mean"),
        ("speed", "speed", "mean"),
        *[(f"accel_{a}", f"accel_{a}", "stddev") for a in _AXES],
        *[(f"gyro_{a}", f"gyro_{a}", "stddev") for a in _AXES],
        ("speed_limit", "speed_limit", "first"),
    )),
    "config2": FeatureConfig("config2", _entries(
        ("distance", "obstacle_distance", "mean"),
        ("speed", "speed", "mean"),
        *[(f"accel_{a}", f"accel_{a}", "variance") for a in _AXES],
        *[(f"gyro_{a}", f"gyro_{a}", "variance") for a in _AXES],
        ("overspeed_count", "speed_limit", "overspeed_count"),
    )),
    "config3": FeatureConfig("config3", _entries(
        ("distance", "obstacle_distance", "range"),
        ("speed", "speed", "range"),
        *[(f"accel_{a}", f"accel_{a}", "positive_mean") for a in _AXES],
        *[(f"brake_{a}", f"accel_{a}", "negative_mean") for a in _AXES],
        *[(f"gyro_{a}", f"gyro_{a}", "variance") for a in _AXES],
        ("overspeed_count", "speed_limit", "overspeed_count"),
    )),
}


def get_config(name: str) -> FeatureConfig:
    try:
        return CONFIGS[name]
    except KeyError:
        raise InvalidArgument(f"unknown feature config {name!r}; choose from {sorted(CONFIGS)}") from None


@dataclass
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    label: int
    window_ref: tuple[str, int] = ("", 0)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def _compute(spec: FeatureSpec, columns: dict, per_sample_overspeed: bool) -> float:
    if spec.transform == "overspeed_count":
        return float(overspeed_count(columns["speed"], columns["speed_limit"], per_sample_overspeed))
    series = columns[spec.channel]
    if spec.transform == "positive_mean":
        return float(np.mean(split_accel_brake(series)[0]))
    if spec.transform == "negative_mean":
        return float(np.mean(split_accel_brake(series)[1]))
    return transform(series, spec.transform)


def featurize(window, config: FeatureConfig | str) -> FeatureVector:
    if isinstance(config, str):
        config = get_config(config)
    columns = window.trace.columns
    values = np.array([_compute(e, columns, config.per_sample_overspeed) for e in config.entries])
    if not np.all(np.isfinite(values)):
        raise InvalidArgument(f"non-finite feature in window {window.ref}")
    return FeatureVector(values, tuple(config.feature_names), int(window.label), window.ref)


def feature_matrix(windows: Sequence, config: FeatureConfig | str) -> tuple[np.ndarray, np.ndarray]:
    vectors = [featurize(w, config) for w in windows]
    if not vectors:
        raise InvalidArgument("no windows to featurize")
    X = np.vstack([v.values for v in vectors])
    y = np.array([v.label for v in vectors], dtype=int)
    return X, y


def write_feature_csv(path: str | Path, X: np.ndarray, y: Sequence[int], names: Sequence[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for row, label in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def read_feature_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise SchemaError(f"{path}: last column must be 'label'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                rows.append(([float(v) for v in row[:-1]], int(row[-1])))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    if not rows:
        raise ParseError(f"{path}: no data rows", line=2)
    X = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), len(header) - 1)
    y = np.array([r[1] for r in rows], dtype=int)
    return X, y, header[:-1]
