"""Confusion matrices, accuracy and macro precision/recall, and their CSV files."""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import EmptyMatrix, IndexOutOfRange, IoError, ValidationError

METRICS_HEADER = ["task", "accuracy", "precision", "recall"]


class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predictions."""

    def __init__(self, k: int, counts=None):
        if k < 1:
            raise ValidationError("class count must be positive")
        self.k = k
        self.counts = np.zeros((k, k), dtype=np.int64) if counts is None else np.array(counts, dtype=np.int64)
        if self.counts.shape != (k, k) or np.any(self.counts < 0):
            raise ValidationError("counts must be a non-negative k x k matrix")

    @classmethod
    def from_labels(cls, k, true, pred):
        cm = cls(k)
        for t, p in zip(true, pred):
            cm.update(int(t), int(p))
        return cm

    def update(self, true_label: int, pred_label: int) -> "ConfusionMatrix":
        if not (0 <= true_label < self.k and 0 <= pred_label < self.k):
            raise IndexOutOfRange(f"label pair ({true_label}, {pred_label}) outside [0, {self.k})")
        self.counts[true_label, pred_label] += 1
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.k != self.k:
            raise ValidationError("cannot merge matrices of different size")
        return ConfusionMatrix(self.k, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix(k={self.k}, total={self.total})"


def confusion_update(cm: ConfusionMatrix, true_label: int, pred_label: int) -> ConfusionMatrix:
    return cm.update(true_label, pred_label)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("no samples recorded")
    return float(np.trace(cm.counts) / cm.total)


def macro_precision_recall(cm: ConfusionMatrix):
    """Unweighted means over all k classes; a zero denominator scores 0."""
    if cm.total == 0:
        raise EmptyMatrix("no samples recorded")
    diag = np.diag(cm.counts).astype(np.float64)
    col = cm.counts.sum(axis=0)
    row = cm.counts.sum(axis=1)
    prec = np.divide(diag, col, out=np.zeros(cm.k), where=col > 0)
    rec = np.divide(diag, row, out=np.zeros(cm.k), where=row > 0)
    return float(prec.mean()), float(rec.mean())


def summarize(cm: ConfusionMatrix) -> dict:
    p, r = macro_precision_recall(cm)
    return {"accuracy": accuracy(cm), "precision": p, "recall": r}


# --------------------------------------------------------------------------
# CSV


def write_confusion_csv(path, cm: ConfusionMatrix, class_names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(class_names)
        w.writerows(cm.counts.tolist())


def read_confusion_csv(path):
    """Returns ``(class_names, ConfusionMatrix)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    counts = [[int(v) for v in r] for r in rows[1:]]
    return names, ConfusionMatrix(len(names), counts)


def write_metrics_csv(path, metrics: dict):
    """``metrics`` maps task -> {accuracy, precision, recall}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for task, m in metrics.items():
            w.writerow([task] + [f"{m[k]:.4f}" for k in METRICS_HEADER[1:]])


def read_metrics_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_HEADER:
            raise ValidationError(f"unexpected metrics header {header}")
        return {r[0]: dict(zip(METRICS_HEADER[1:], map(float, r[1:]))) for r in reader}


def report_write(cms: dict, metrics: dict, out_dir, class_names: dict):
    """Write ``confusion_<task>.csv`` per task plus ``metrics.csv`` under ``out_dir``."""
    try:
        if not os.path.isdir(out_dir):
            raise FileNotFoundError(f"no such directory: {out_dir}")
        for task, cm in cms.items():
            write_confusion_csv(os.path.join(out_dir, f"confusion_{task}.csv"), cm, class_names[task])
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metrics)
    except OSError as exc:
        raise IoError(f"cannot write report to {out_dir}: {exc}") from exc
