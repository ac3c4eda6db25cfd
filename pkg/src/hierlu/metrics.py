"""Object-level evaluation: confusion matrices, OA, F1 scores, consistency.

Confusion matrices index rows by the reference class and columns by the
prediction.  Merging is associative and commutative, so matrices accumulated
in parallel over disjoint prediction streams reduce to the same counts.

Per-class F1 uses the harmonic mean of precision (column-normalized) and
recall (row-normalized).  A class that never occurs in either the reference
or the prediction stream is *absent*: it is reported as NaN and excluded
from the mean F1.  A present class with a zero denominator scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import PredictionTuple


@dataclass
class ConfusionMatrix:
    """Counts of (reference, prediction) pairs for one semantic level."""

    level: int
    counts: np.ndarray

    @classmethod
    def empty(cls, level: int, n_classes: int) -> "ConfusionMatrix":
        return cls(level, np.zeros((n_classes, n_classes), dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, reference: int, predicted: int) -> "ConfusionMatrix":
        if not 0 <= reference < self.n_classes:
            raise ValueError(f"reference index {reference} out of range")
        if not 0 <= predicted < self.n_classes:
            raise ValueError(f"predicted index {predicted} out of range")
        self.counts[reference, predicted] += 1
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.level != self.level or other.n_classes != self.n_classes:
            raise ValueError("cannot merge confusion matrices of different shape")
        return ConfusionMatrix(self.level, self.counts + other.counts)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total; raises on an empty matrix."""
    total = cm.total
    if total == 0:
        raise ValueError("no samples in confusion matrix")
    return float(np.trace(cm.counts)) / total


def precision_recall(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-class precision and recall; NaN marks absent classes."""
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    absent = (row == 0) & (col == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(col > 0, diag / np.where(col > 0, col, 1.0), 0.0)
        rec = np.where(row > 0, diag / np.where(row > 0, row, 1.0), 0.0)
    prec[absent] = np.nan
    rec[absent] = np.nan
    return prec, rec


def f1_scores(cm: ConfusionMatrix) -> np.ndarray:
    """Per-class F1; NaN marks classes absent from reference and prediction."""
    prec, rec = precision_recall(cm)
    f1 = np.zeros(cm.n_classes, dtype=np.float64)
    present = ~np.isnan(prec)
    denom = prec[present] + rec[present]
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(denom > 0,
                        2.0 * prec[present] * rec[present]
                        / np.where(denom > 0, denom, 1.0),
                        0.0)
    f1[present] = vals
    f1[~present] = np.nan
    return f1


def mean_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean F1 over the classes present in the matrix."""
    f1 = f1_scores(cm)
    present = ~np.isnan(f1)
    if not present.any():
        raise ValueError("no samples in confusion matrix")
    return float(f1[present].mean())


def consistency_rate(predictions: list[PredictionTuple]) -> float:
    """Fraction of predictions whose label tuple violates the hierarchy."""
    if not predictions:
        raise ValueError("no samples")
    bad = sum(1 for p in predictions if not p.consistent)
    return bad / len(predictions)
