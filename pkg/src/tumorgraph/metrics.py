"""Confusion-matrix metrics: accuracy, precision/recall, and F1.

The confusion matrix is 3x3 with rows = true class and columns = predicted
class, indexed by the fixed order glioma, meningioma, pituitary. A class
with a zero denominator contributes precision/recall 0 (and the report
flags it). F1 is reported as a percentage: 2PR / (P + R) * 100.
"""

from dataclasses import dataclass

import numpy as np

from .data import CLASSES


def confusion(preds, labels, n_classes=3):
    """Tally counts[true][pred] over paired index arrays."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    if preds.size and (preds.min() < 0 or preds.max() >= n_classes
                       or labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"class indices must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def accuracy(cm):
    total = int(cm.sum())
    return float(np.trace(cm) / total) if total else 0.0


def per_class_precision_recall(cm):
    """Per-class (precision, recall) arrays with the zero-denominator rule."""
    diag = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    return precision, recall


def precision_recall(cm, averaging="macro"):
    """Averaged (precision, recall); micro collapses to global accuracy."""
    if averaging == "macro":
        p, r = per_class_precision_recall(cm)
        return float(p.mean()), float(r.mean())
    if averaging == "micro":
        total = int(cm.sum())
        micro = float(np.trace(cm) / total) if total else 0.0
        return micro, micro
    raise ValueError(f"averaging must be 'macro' or 'micro', got {averaging!r}")


def f1(precision, recall):
    """Harmonic mean of precision and recall, as a percentage."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall) * 100.0


@dataclass(frozen=True)
class MetricsRecord:
    """Full metric set for one evaluation; every value lies in [0, 1] except
    the percentage-scaled F1 fields."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    per_class: dict  # class name -> {"precision", "recall", "f1"}

    def to_json_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "micro_precision": self.micro_precision,
            "per_class": self.per_class,
        }


def summarize(cm):
    """Build a MetricsRecord from a confusion matrix."""
    p, r = per_class_precision_recall(cm)
    macro_p, macro_r = float(p.mean()), float(r.mean())
    micro_p, micro_r = precision_recall(cm, "micro")
    per_class = {
        name: {
            "precision": float(p[i]),
            "recall": float(r[i]),
            "f1": f1(float(p[i]), float(r[i])),
        }
        for i, name in enumerate(CLASSES)
    }
    return MetricsRecord(
        accuracy=accuracy(cm),
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=f1(macro_p, macro_r),
        micro_precision=micro_p,
        micro_recall=micro_r,
        per_class=per_class,
    )
