"""Loading, cleaning, window slicing and stratified splitting of traces."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, ParseError, SchemaError
from .simgen import CHANNELS, CSV_COLUMNS, DT, SENSOR_RANGE, Trace

log = logging.getLogger(__name__)

WINDOW_LEN = 600
ZERO_TOLERANCE = 0.9
STOP_SPEED_EPS = 0.1
WARMUP_S = 2.0


@dataclass
class Window:
    trace: Trace
    label: int
    source_id: str
    start_index: int

    def __len__(self) -> int:
        return len(self.trace)

    @property
    def records(self):
        return self.trace.records()

    @property
    def ref(self) -> tuple[str, int]:
        return (self.source_id, self.start_index)


@dataclass
class SplitDataset:
    train: list
    test: list
    seed: int
    ratio: float
    train_index: list[int] = field(default_factory=list)
    test_index: list[int] = field(default_factory=list)


def load_trace(path: str | Path, source_id: str | None = None) -> Trace:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if unknown:
            raise SchemaError(f"unknown column(s) {unknown} in {path}")
        if tuple(header) != CSV_COLUMNS:
            raise SchemaError(f"expected header {','.join(CSV_COLUMNS)}")
        rows: list[list[float]] = []
        labels = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line=lineno)
            values = []
            for name, text in zip(CHANNELS, row):
                if text == "" and name == "obstacle_distance":
                    values.append(math.nan)
                    continue
                try:
                    values.append(float(text))
                except ValueError:
                    raise ParseError(f"bad value {text!r} for {name}", line=lineno) from None
            try:
                labels.add(int(row[-1]))
            except ValueError:
                raise ParseError(f"bad label {row[-1]!r}", line=lineno) from None
            rows.append(values)
    if not rows:
        raise ParseError("no data rows", line=2)
    if len(labels) != 1:
        raise ParseError(f"trace mixes labels {sorted(labels)}")
    data = np.array(rows, dtype=float)
    columns = {c: data[:, i].copy() for i, c in enumerate(CHANNELS)}
    return Trace(columns, labels.pop(), source_id if source_id is not None else path.stem)


def clean(trace: Trace, warmup_s: float = WARMUP_S, max_range: float = SENSOR_RANGE) -> Trace:
    """Drop the warm-up prefix and impute missing obstacle readings with ``max_range``."""
    drop = int(math.floor(warmup_s / DT + 1e-9))
    out = trace[drop:]
    dist = out.columns["obstacle_distance"].copy()
    dist[np.isnan(dist)] = max_range
    out.columns["obstacle_distance"] = dist
    out.meta = dict(trace.meta)
    return out


def scan_windows(
    trace: Trace,
    window_len: int = WINDOW_LEN,
    zero_tolerance: float = ZERO_TOLERANCE,
    stop_speed_eps: float = STOP_SPEED_EPS,
) -> list[dict]:
    """Classify every full window of ``trace`` as kept or discarded."""
    if window_len <= 0:
        raise InvalidArgument("window_len must be positive")
    if not 0.0 <= zero_tolerance <= 1.0:
        raise InvalidArgument("zero_tolerance must lie in [0, 1]")
    speed = trace.columns["speed"]
    entries = []
    for start in range(0, len(trace) - window_len + 1, window_len):
        stopped = float(np.mean(speed[start:start + window_len] < stop_speed_eps))
        kept = stopped <= zero_tolerance
        entries.append({
            "source_id": trace.source_id,
            "start_index": start,
            "label": trace.label,
            "kept": kept,
            "reason": "ok" if kept else f"stoppage {stopped:.3f} > {zero_tolerance}",
        })
    return entries


def slice_windows(
    trace: Trace,
    window_len: int = WINDOW_LEN,
    zero_tolerance: float = ZERO_TOLERANCE,
    stop_speed_eps: float = STOP_SPEED_EPS,
) -> list[Window]:
    windows = []
    for entry in scan_windows(trace, window_len, zero_tolerance, stop_speed_eps):
        if entry["kept"]:
            start = entry["start_index"]
            windows.append(Window(trace[start:start + window_len], trace.label, trace.source_id, start))
    return windows


def prepare_windows(
    traces: Iterable[Trace],
    warmup_s: float = WARMUP_S,
    window_len: int = WINDOW_LEN,
    zero_tolerance: float = ZERO_TOLERANCE,
    stop_speed_eps: float = STOP_SPEED_EPS,
    manifest: list | None = None,
) -> list[Window]:
    """Clean and slice many traces; series shorter than one window are dropped."""
    windows: list[Window] = []
    too_short = 0
    for trace in traces:
        cleaned = clean(trace, warmup_s)
        if len(cleaned) < window_len:
            too_short += 1
            if manifest is not None:
                manifest.append({"source_id": trace.source_id, "start_index": 0, "label": trace.label,
                                 "kept": False, "reason": "too short"})
            continue
        entries = scan_windows(cleaned, window_len, zero_tolerance, stop_speed_eps)
        if manifest is not None:
            manifest.extend(entries)
        for entry in entries:
            if entry["kept"]:
                start = entry["start_index"]
                windows.append(Window(cleaned[start:start + window_len], cleaned.label, cleaned.source_id, start))
    if too_short:
        log.info("discarded %d series shorter than one window", too_short)
    return windows


def write_manifest(entries: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(list(entries), indent=2))


def _label_of(item) -> int:
    return int(item.label)


def split(items: Sequence, ratio: float = 0.8, seed: int = 0, labels: Sequence[int] | None = None) -> SplitDataset:
    """Stratified, seeded train/test split."""
    if not 0.0 < ratio < 1.0:
        raise InvalidArgument("ratio must lie strictly between 0 and 1")
    if labels is None:
        labels = [_label_of(it) for it in items]
    labels = np.asarray(labels)
    if len(labels) != len(items):
        raise InvalidArgument("labels and items differ in length")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise InvalidArgument(f"class {cls} has fewer than 2 items")
        members = members[rng.permutation(len(members))]
        n_train = int(math.floor(ratio * len(members) + 0.5))
        n_train = min(max(n_train, 1), len(members) - 1)
        train_idx.extend(members[:n_train].tolist())
        test_idx.extend(members[n_train:].tolist())
    train_idx.sort()
    test_idx.sort()
    return SplitDataset(
        train=[items[i] for i in train_idx],
        test=[items[i] for i in test_idx],
        seed=seed,
        ratio=ratio,
        train_index=train_idx,
        test_index=test_idx,
    )
