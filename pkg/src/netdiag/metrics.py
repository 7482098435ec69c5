"""Confusion matrix and accuracy/precision/recall/F1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import LengthMismatch, UnknownLabel


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class Metrics:
    """Classification metrics; confusion rows are truth, columns prediction."""

    class_order: tuple
    confusion: np.ndarray
    accuracy: float
    precision: dict
    recall: dict
    f1: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @classmethod
    def from_confusion(cls, confusion, class_order) -> "Metrics":
        cm = np.asarray(confusion, dtype=np.int64)
        k = len(class_order)
        if cm.shape != (k, k):
            raise LengthMismatch(f"confusion matrix shape {cm.shape} for {k} classes")
        tp = np.diag(cm)
        precision = _safe_div(tp, cm.sum(axis=0))
        recall = _safe_div(tp, cm.sum(axis=1))
        f1 = _safe_div(2 * precision * recall, precision + recall)
        total = cm.sum()
        names = tuple(str(c) for c in class_order)
        return cls(
            class_order=names,
            confusion=cm,
            accuracy=float(tp.sum() / total) if total else 0.0,
            precision=dict(zip(names, precision.tolist())),
            recall=dict(zip(names, recall.tolist())),
            f1=dict(zip(names, f1.tolist())),
            macro_precision=float(precision.mean()),
            macro_recall=float(recall.mean()),
            macro_f1=float(f1.mean()),
        )

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())

    @property
    def n_correct(self) -> int:
        return int(np.trace(self.confusion))

    @property
    def n_misclassified(self) -> int:
        return self.n_samples - self.n_correct

    def to_dict(self) -> dict:
        return {
            "class_order": list(self.class_order),
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "averaging": "macro",
        }


def confusion_matrix(y_true, y_pred, class_order) -> np.ndarray:
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    index = {c: i for i, c in enumerate(class_order)}
    cm = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index:
            raise UnknownLabel(f"true label {t!r} not in {list(class_order)}")
        if p not in index:
            raise UnknownLabel(f"predicted label {p!r} not in {list(class_order)}")
        cm[index[t], index[p]] += 1
    return cm


def evaluate(y_true, y_pred, class_order) -> Metrics:
    """Confusion matrix plus accuracy and per-class/macro precision, recall, F1.

    Precision or recall of a class with an empty denominator is 0.
    """
    return Metrics.from_confusion(confusion_matrix(y_true, y_pred, class_order), class_order)
