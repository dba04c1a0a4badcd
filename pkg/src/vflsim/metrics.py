"""Evaluation metrics: accuracy, rank-based AUC, Gini-style area ratio, F1.

The AUC uses the rank formulation of the Mann-Whitney statistic with
mid-ranks for ties, so tied scores contribute 1/2 per positive/negative
pair. The area ratio is the accuracy-ratio transform 2 * AUC - 1, i.e. the
model's CAP-curve area relative to a perfect model's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError


def accuracy(predicted: np.ndarray, actual: np.ndarray) -> float:
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise DimensionError(
            f"accuracy expects matching 1-D arrays, got {predicted.shape} "
            f"and {actual.shape}"
        )
    if predicted.size == 0:
        raise UndefinedMetricError("accuracy of an empty sample")
    return float(np.mean(predicted == actual))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank of their run."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative (ties count 1/2).

    Computed as (R_pos - n_pos(n_pos + 1)/2) / (n_pos * n_neg) where R_pos is
    the mid-rank sum of the positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(
            f"auc expects matching 1-D arrays, got {scores.shape} and {labels.shape}"
        )
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc needs at least one positive and one negative")
    ranks = _midranks(scores)
    r_pos = float(ranks[pos].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def area_ratio(scores: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy ratio (Gini coefficient) of the score ranking: 2 * AUC - 1."""
    return 2.0 * auc(scores, labels) - 1.0


def f1(predicted: np.ndarray, actual: np.ndarray) -> float:
    """F1 of the positive class for binary 0/1 predictions."""
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise DimensionError(
            f"f1 expects matching 1-D arrays, got {predicted.shape} "
            f"and {actual.shape}"
        )
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    if 2 * tp + fp + fn == 0:
        raise UndefinedMetricError("f1 with no positives predicted or present")
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass
class MetricSet:
    """Per-trial evaluation results; binary-only fields are None for multiclass."""

    accuracy: float
    auc: float | None = None
    area_ratio: float | None = None
    f1: float | None = None

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": self.auc,
            "area_ratio": self.area_ratio,
            "f1": self.f1,
        }


def evaluate(
    scores: np.ndarray, predicted_classes: np.ndarray, actual: np.ndarray
) -> MetricSet:
    """Full metric set from class scores (B, M), argmax predictions, and truth."""
    scores = np.asarray(scores, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    acc = accuracy(predicted_classes, actual)
    if scores.ndim == 2 and scores.shape[1] == 2:
        pos_scores = scores[:, 1]
        return MetricSet(
            accuracy=acc,
            auc=auc(pos_scores, actual),
            area_ratio=area_ratio(pos_scores, actual),
            f1=f1(predicted_classes, actual),
        )
    return MetricSet(accuracy=acc)


def aggregate(values: list[float]) -> dict:
    """Mean and population standard deviation (ddof 0) across trials."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise UndefinedMetricError("aggregate of zero trials")
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "n": int(arr.size),
    }
