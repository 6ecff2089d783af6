"""Confusion matrices and accuracy / precision / recall / F1."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f1: list[float]
    averaging: str = "macro"
    degenerate_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {
                "precision": self.per_class_precision,
                "recall": self.per_class_recall,
                "f1": self.per_class_f1,
            },
            "averaging": self.averaging,
            "degenerate_classes": self.degenerate_classes,
        }


def confusion_matrix(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise InvalidArgument("y_true and y_pred differ in length")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise InvalidArgument(f"{name} holds a label outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class and macro-averaged metrics; zero denominators report 0 and flag the class."""
    counts = np.asarray(cm.counts)
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise InvalidArgument("confusion matrix is empty")
    tp = np.diag(counts).astype(float)
    predicted = counts.sum(axis=0).astype(float)
    actual = counts.sum(axis=1).astype(float)
    precision, recall, f1 = [], [], []
    degenerate = []
    for k in range(counts.shape[0]):
        if predicted[k] == 0 or actual[k] == 0:
            degenerate.append(k)
        p = _ratio(tp[k], predicted[k])
        r = _ratio(tp[k], actual[k])
        precision.append(p)
        recall.append(r)
        f1.append(_ratio(2.0 * p * r, p + r))
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision=float(np.mean(precision)),
        recall=float(np.mean(recall)),
        f1=float(np.mean(f1)),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        degenerate_classes=degenerate,
    )


def micro_recall(cm: ConfusionMatrix) -> float:
    counts = np.asarray(cm.counts)
    tp = np.diag(counts).sum()
    fn = counts.sum() - tp
    return float(tp / (tp + fn))


def normalize_cm(cm: ConfusionMatrix) -> np.ndarray:
    counts = np.asarray(cm.counts, dtype=float)
    sums = counts.sum(axis=1)
    for k, s in enumerate(sums):
        if s <= 0:
            raise InvalidArgument(f"class {k} has no true instances; cannot normalize its row")
    return counts / sums[:, None]


def write_cm_csv(matrix, path: str | Path, class_names=None) -> None:
    matrix = np.asarray(getattr(matrix, "counts", matrix))
    n = matrix.shape[0]
    names = list(class_names) if class_names is not None else [str(k) for k in range(n)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + names)
        for k in range(n):
            row = matrix[k]
            cells = [str(int(v)) for v in row] if np.issubdtype(matrix.dtype, np.integer) else [repr(float(v)) for v in row]
            writer.writerow([names[k]] + cells)


def write_metrics_json(report: MetricsReport, path: str | Path, extra: dict | None = None) -> None:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2))
