"""Metric tests, including the O(N^2) pair-counting oracle for AUC."""

import numpy as np
import pytest

from vflsim import metrics
from vflsim.errors import DimensionError, UndefinedMetricError
from vflsim.seeding import rng_for


def pairwise_auc(scores, labels):
    """Brute-force Mann-Whitney: average over every positive/negative pair."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_matches_pairwise_oracle_with_ties(self):
        for seed in range(30):
            rng = rng_for(seed, "auc")
            n = int(rng.integers(10, 80))
            # quantized scores force plenty of exact ties
            scores = np.round(rng.normal(size=n), 1)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert metrics.auc(scores, labels) == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12
            )

    def test_perfect_and_inverted(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        labels = np.array([0, 0, 1, 1])
        assert metrics.auc(scores, labels) == 1.0
        assert metrics.auc(-scores, labels) == 0.0

    def test_all_tied_is_half(self):
        assert metrics.auc(np.ones(6), np.array([0, 1, 0, 1, 0, 1])) == 0.5

    def test_needs_both_classes(self):
        with pytest.raises(UndefinedMetricError):
            metrics.auc(np.array([0.1, 0.2]), np.array([1, 1]))

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            metrics.auc(np.zeros((2, 2)), np.zeros((2, 2), dtype=int))


class TestAreaRatio:
    def test_is_exactly_two_auc_minus_one(self):
        for seed in range(10):
            rng = rng_for(seed, "gini")
            scores = np.round(rng.normal(size=40), 1)
            labels = rng.integers(0, 2, size=40)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert metrics.area_ratio(scores, labels) == 2.0 * metrics.auc(
                scores, labels
            ) - 1.0


class TestF1:
    def test_hand_case(self):
        predicted = np.array([1, 1, 0, 0, 1])
        actual = np.array([1, 0, 0, 1, 1])
        # tp=2 fp=1 fn=1 -> f1 = 4/6
        assert metrics.f1(predicted, actual) == pytest.approx(2 / 3)

    def test_perfect(self):
        y = np.array([0, 1, 1, 0])
        assert metrics.f1(y, y) == 1.0

    def test_undefined_when_no_positives_anywhere(self):
        with pytest.raises(UndefinedMetricError):
            metrics.f1(np.zeros(4, dtype=int), np.zeros(4, dtype=int))


class TestAccuracyAndAggregate:
    def test_accuracy(self):
        assert metrics.accuracy(np.array([1, 2, 3]), np.array([1, 0, 3])) == pytest.approx(2 / 3)

    def test_aggregate_population_std(self):
        stats = metrics.aggregate([1.0, 2.0, 3.0])
        assert stats["mean"] == 2.0
        assert stats["std"] == pytest.approx(np.sqrt(2.0 / 3.0))
        assert stats["n"] == 3

    def test_aggregate_empty(self):
        with pytest.raises(UndefinedMetricError):
            metrics.aggregate([])


class TestEvaluate:
    def test_binary_fills_all_fields(self):
        rng = rng_for(3, "eval")
        scores = rng.uniform(size=(50, 2))
        scores /= scores.sum(axis=1, keepdims=True)
        actual = rng.integers(0, 2, size=50)
        predicted = np.argmax(scores, axis=1)
        ms = metrics.evaluate(scores, predicted, actual)
        assert ms.auc == pytest.approx(metrics.auc(scores[:, 1], actual))
        assert ms.area_ratio == 2.0 * ms.auc - 1.0
        assert ms.f1 is not None

    def test_multiclass_binary_fields_none(self):
        scores = np.eye(4)
        actual = np.arange(4)
        ms = metrics.evaluate(scores, np.argmax(scores, axis=1), actual)
        assert ms.accuracy == 1.0
        assert ms.auc is None and ms.area_ratio is None and ms.f1 is None
