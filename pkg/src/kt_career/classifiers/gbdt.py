"""Gradient-boosted decision trees for binary logistic loss.

Stagewise additive modeling: each stage fits a least-squares regression
tree to the negative gradient of the logistic loss, then replaces every
leaf's value with a single Newton step (sum of residuals over sum of
hessians). Split search is exact over midpoints of consecutive distinct
feature values, scanning features left to right, so ties resolve the
same way on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabelsError

_LEAF_HESSIAN_FLOOR = 1e-12


@dataclass
class _Leaf:
    value: float


@dataclass
class _Split:
    feature: int
    threshold: float
    left: "_Split | _Leaf"
    right: "_Split | _Leaf"
    gain: float


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    # stable mean logistic loss: log(1 + e^-m) with m = (2y-1)·score
    margin = np.where(y == 1, scores, -scores)
    return float(np.mean(np.logaddexp(0.0, -margin)))


def _best_split_of_feature(values, residuals, min_leaf):
    """Best squared-error split of one column; returns (gain, threshold)."""
    order = np.argsort(values, kind="mergesort")
    vs = values[order]
    rs = residuals[order]
    n = vs.size
    left_sum = np.cumsum(rs)[:-1]
    total = left_sum[-1] + rs[-1] if n > 1 else rs.sum()
    left_n = np.arange(1, n)
    boundary = vs[:-1] < vs[1:]
    sized = (left_n >= min_leaf) & (n - left_n >= min_leaf)
    ok = boundary & sized
    if not ok.any():
        return None
    right_sum = total - left_sum
    right_n = n - left_n
    gain = np.where(ok, left_sum**2 / left_n + right_sum**2 / right_n, -np.inf)
    best = int(np.argmax(gain))
    improvement = gain[best] - total**2 / n
    if improvement <= 1e-12:
        return None
    return improvement, (vs[best] + vs[best + 1]) / 2.0


class _TreeBuilder:
    def __init__(self, x, residuals, hessians, max_depth, min_leaf):
        self.x = x
        self.residuals = residuals
        self.hessians = hessians
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.importances = np.zeros(x.shape[1])

    def leaf(self, rows):
        num = self.residuals[rows].sum()
        den = self.hessians[rows].sum()
        return _Leaf(value=float(num / max(den, _LEAF_HESSIAN_FLOOR)))

    def build(self, rows, depth):
        if depth >= self.max_depth or rows.size < 2 * self.min_leaf:
            return self.leaf(rows)
        res = self.residuals[rows]
        if res.max() == res.min():
            return self.leaf(rows)
        best_gain = 0.0
        best = None
        for feature in range(self.x.shape[1]):
            found = _best_split_of_feature(self.x[rows, feature], res, self.min_leaf)
            if found is not None and found[0] > best_gain + 1e-15:
                best_gain, threshold = found
                best = (feature, threshold)
        if best is None:
            return self.leaf(rows)
        feature, threshold = best
        self.importances[feature] += best_gain
        goes_left = self.x[rows, feature] <= threshold
        return _Split(
            feature=feature,
            threshold=float(threshold),
            left=self.build(rows[goes_left], depth + 1),
            right=self.build(rows[~goes_left], depth + 1),
            gain=float(best_gain),
        )


def _predict_tree(node, x, rows, out):
    if isinstance(node, _Leaf):
        out[rows] = node.value
        return
    goes_left = x[rows, node.feature] <= node.threshold
    _predict_tree(node.left, x, rows[goes_left], out)
    _predict_tree(node.right, x, rows[~goes_left], out)


def tree_to_dict(node) -> dict:
    if isinstance(node, _Leaf):
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "gain": node.gain,
        "left": tree_to_dict(node.left),
        "right": tree_to_dict(node.right),
    }


def tree_from_dict(payload: dict):
    if "value" in payload:
        return _Leaf(value=float(payload["value"]))
    return _Split(
        feature=int(payload["feature"]),
        threshold=float(payload["threshold"]),
        gain=float(payload.get("gain", 0.0)),
        left=tree_from_dict(payload["left"]),
        right=tree_from_dict(payload["right"]),
    )


@dataclass
class GbdtClassifier:
    n_estimators: int
    max_depth: int
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    base_score: float = 0.0
    trees: list = field(default_factory=list)
    stage_losses: list = field(default_factory=list)
    importances_: np.ndarray | None = None

    def fit(self, x, y) -> "GbdtClassifier":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = y.size
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == n:
            raise DegenerateLabelsError(
                f"boosting needs both classes, got {n_pos} positives of {n}"
            )
        self.base_score = math.log(n_pos / (n - n_pos))
        self.trees = []
        self.stage_losses = []
        self.importances_ = np.zeros(x.shape[1])

        scores = np.full(n, self.base_score)
        all_rows = np.arange(n)
        for _ in range(self.n_estimators):
            p = _sigmoid(scores)
            residuals = y - p
            hessians = p * (1.0 - p)
            builder = _TreeBuilder(
                x, residuals, hessians, self.max_depth, self.min_samples_leaf
            )
            root = builder.build(all_rows, 0)
            self.trees.append(root)
            self.importances_ += builder.importances
            step = np.empty(n)
            _predict_tree(root, x, all_rows, step)
            scores = scores + self.learning_rate * step
            self.stage_losses.append(_log_loss(scores, y))
        return self

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        scores = np.full(x.shape[0], self.base_score)
        rows = np.arange(x.shape[0])
        step = np.empty(x.shape[0])
        for root in self.trees:
            _predict_tree(root, x, rows, step)
            scores = scores + self.learning_rate * step
        return scores

    def predict_proba(self, x) -> np.ndarray:
        return _sigmoid(self.decision_function(x))

    def predict(self, x) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(np.int64)

    def coefficients(self) -> np.ndarray | None:
        return None

    def feature_scores(self) -> np.ndarray:
        """Total split gain accumulated per feature across all trees."""
        if self.importances_ is None:
            raise RuntimeError("classifier is not fitted")
        return self.importances_.copy()

    def payload(self) -> dict:
        return {
            "base_score": self.base_score,
            "trees": [tree_to_dict(t) for t in self.trees],
            "stage_losses": list(self.stage_losses),
            "importances": list(map(float, self.importances_)),
        }

    def load_payload(self, payload: dict) -> "GbdtClassifier":
        self.base_score = float(payload["base_score"])
        self.trees = [tree_from_dict(t) for t in payload["trees"]]
        self.stage_losses = [float(v) for v in payload["stage_losses"]]
        self.importances_ = np.array(payload["importances"], dtype=np.float64)
        return self
