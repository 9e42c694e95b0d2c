"""Metric tests against brute-force reference implementations."""

import math

import numpy as np
import pytest

from kt_career.errors import UndefinedMetricError
from kt_career.metrics import auc, average_precision, combined_score, rmse


def auc_pairwise(scores, labels):
    """O(n^2) pairwise comparison oracle with half credit for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def ap_threshold_scan(scores, labels):
    """Exhaustive distinct-threshold oracle for average precision."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = labels.sum()
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    recall_prev = 0.0
    for threshold in thresholds:
        picked = scores >= threshold
        tp = labels[picked].sum()
        precision = tp / picked.sum()
        recall = tp / n_pos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
    return ap


def random_instance(rng, allow_ties=True):
    n = int(rng.integers(2, 50))
    labels = rng.integers(0, 2, n)
    labels[rng.integers(0, n)] = 1
    labels[rng.integers(0, n)] = 0 if labels.sum() == n else labels[0]
    if labels.sum() == 0:
        labels[0] = 1
    if labels.sum() == n:
        labels[0] = 0
    if allow_ties and rng.random() < 0.5:
        scores = rng.integers(0, 4, n).astype(float) / 3.0
    else:
        scores = rng.random(n)
    return scores, labels


class TestAuc:
    def test_perfect_and_reversed_ranking(self):
        labels = np.array([0, 0, 1, 1])
        assert auc([0.1, 0.2, 0.8, 0.9], labels) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], labels) == 0.0

    def test_all_tied_scores_give_half(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(300):
            scores, labels = random_instance(rng)
            assert abs(auc(scores, labels) - auc_pairwise(scores, labels)) < 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(103)
        for _ in range(50):
            scores, labels = random_instance(rng, allow_ties=False)
            base = auc(scores, labels)
            assert abs(auc(np.exp(scores), labels) - base) < 1e-12
            assert abs(auc(2.0 * scores + 1.0, labels) - base) < 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.9], [1, 1])


class TestRmse:
    def test_exact_predictions(self):
        assert rmse([0.0, 1.0, 1.0], [0, 1, 1]) == 0.0

    def test_hand_example(self):
        # errors 0.5 each -> sqrt(mean(0.25)) = 0.5
        assert abs(rmse([0.5, 0.5], [0, 1]) - 0.5) < 1e-15

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(107)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            p = rng.random(n)
            y = rng.integers(0, 2, n)
            direct = math.sqrt(np.mean((p - y) ** 2))
            assert abs(rmse(p, y) - direct) < 1e-12

    def test_out_of_range_probability_rejected(self):
        with pytest.raises(ValueError):
            rmse([1.2], [1])


class TestAveragePrecision:
    def test_all_positives_is_one(self):
        assert average_precision([0.2, 0.7, 0.7], [1, 1, 1]) == 1.0

    def test_perfect_ranking_is_one(self):
        assert average_precision([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_matches_threshold_scan_oracle(self):
        rng = np.random.default_rng(109)
        for _ in range(300):
            scores, labels = random_instance(rng)
            if labels.sum() == 0:
                continue
            ours = average_precision(scores, labels)
            ref = ap_threshold_scan(scores, labels)
            assert abs(ours - ref) < 1e-12

    def test_constant_scores_equal_base_rate(self):
        labels = np.array([1, 0, 0, 1, 0, 0, 0, 1])
        base = labels.mean()
        assert abs(average_precision(np.full(8, 0.3), labels) - base) < 1e-12

    def test_random_scores_average_near_base_rate(self):
        # For large n the expectation over random scorings approaches the
        # base rate (small samples sit slightly above it).
        rng = np.random.default_rng(113)
        labels = (np.arange(400) < 120).astype(int)
        values = [
            average_precision(rng.random(400), labels) for _ in range(300)
        ]
        assert abs(np.mean(values) - 0.3) < 0.01

    def test_no_positives_rejected(self):
        with pytest.raises(UndefinedMetricError):
            average_precision([0.1, 0.9], [0, 0])


class TestCombinedScore:
    def test_reference_values(self):
        assert abs(combined_score(0.623, 0.432) - 1.191) < 1e-12
        assert abs(combined_score(0.694, 0.414) - 1.280) < 1e-12

    def test_range(self):
        rng = np.random.default_rng(127)
        for _ in range(100):
            a = rng.random()
            r = rng.random()
            c = combined_score(a, r)
            assert 0.0 <= c <= 2.0
