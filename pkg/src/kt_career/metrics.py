"""Binary classification metrics: AUC, RMSE, average precision, combined.

AUC is the trapezoidal area under the ROC curve, computed through the
rank-sum identity (ties counted half), so it equals the pairwise
probability P(score_pos > score_neg) + 0.5 P(tie). Average precision sums
precision weighted by recall increments over descending score thresholds
with tied scores collapsed into one threshold.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError, UndefinedMetricError


def _check_pair(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1:
        raise ShapeError("scores and labels must be 1-D")
    if s.shape != y.shape:
        raise ShapeError(f"length mismatch: {s.shape[0]} scores, {y.shape[0]} labels")
    if s.size == 0:
        raise UndefinedMetricError("empty inputs")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    uniq = np.unique(y)
    if not np.all(np.isin(uniq, [0, 1])):
        raise ValueError(f"labels must be 0/1, got values {uniq.tolist()}")
    return s, y.astype(np.int64)


def auc(scores, labels) -> float:
    """Area under the ROC curve; requires both classes present."""
    s, y = _check_pair(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # average 1-based rank over the tie block [i, j]
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)


def rmse(probabilities, labels) -> float:
    """Root mean squared error of probabilities against 0/1 outcomes."""
    p, y = _check_pair(probabilities, labels)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return math.sqrt(float(np.mean((p - y) ** 2)))


def average_precision(scores, labels) -> float:
    """Precision averaged over recall increments at descending thresholds.

    Tied scores form a single threshold. Requires at least one positive.
    """
    s, y = _check_pair(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_desc = s[order]
    y_desc = y[order]
    ap = 0.0
    tp = 0
    seen = 0
    recall_prev = 0.0
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s_desc[j + 1] == s_desc[i]:
            j += 1
        tp += int(y_desc[i : j + 1].sum())
        seen += j - i + 1
        precision = tp / seen
        recall = tp / n_pos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
        i = j + 1
    return ap


def combined_score(auc_value: float, rmse_value: float) -> float:
    """AUC plus one minus RMSE, the single scalar used for model selection."""
    return auc_value + (1.0 - rmse_value)
