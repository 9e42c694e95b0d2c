"""L2 and L1 penalized logistic regression.

The L2 path runs damped Newton iterations on the exact objective; the
L1 path runs coordinate descent over a weighted quadratic approximation
with soft thresholding, the glmnet recipe. Both leave the intercept
unpenalized and stop on a 1e-8 stationarity tolerance by default, so
fitted coefficients are reproducible to far tighter than the tolerances
used in any comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateLabelsError, TrainingDivergedError

PENALTIES = ("l1", "l2")
_WEIGHT_FLOOR = 1e-6


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _ce_sum(margins: np.ndarray) -> float:
    return float(np.logaddexp(0.0, -margins).sum())


def _soft_threshold(value: float, penalty: float) -> float:
    if value > penalty:
        return value - penalty
    if value < -penalty:
        return value + penalty
    return 0.0


@dataclass
class LogisticClassifier:
    c: float = 1.0
    penalty: str = "l2"
    tol: float = 1e-8
    max_iter: int = 1000
    coef_: np.ndarray | None = None
    intercept_: float = 0.0
    n_iter_: int = 0

    def _validate(self, y):
        if self.penalty not in PENALTIES:
            raise ValueError(
                f"penalty must be one of {PENALTIES}, got {self.penalty!r}"
            )
        if self.c <= 0:
            raise ValueError(f"C must be positive, got {self.c}")
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == y.size:
            raise DegenerateLabelsError(
                f"logistic regression needs both classes, got {n_pos} "
                f"positives of {y.size}"
            )

    def fit(self, x, y) -> "LogisticClassifier":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self._validate(y)
        if self.penalty == "l2":
            self._fit_l2(x, y)
        else:
            self._fit_l1(x, y)
        return self

    # --- L2: damped Newton on the exact objective ---

    def _objective_l2(self, x, y, beta):
        z = x @ beta[1:] + beta[0]
        margins = np.where(y == 1, z, -z)
        return _ce_sum(margins) + 0.5 / self.c * float(beta[1:] @ beta[1:])

    def _fit_l2(self, x, y):
        n, d = x.shape
        beta = np.zeros(d + 1)
        obj = self._objective_l2(x, y, beta)
        for iteration in range(1, self.max_iter + 1):
            z = x @ beta[1:] + beta[0]
            p = _sigmoid(z)
            grad = np.empty(d + 1)
            grad[0] = (p - y).sum()
            grad[1:] = x.T @ (p - y) + beta[1:] / self.c
            if np.max(np.abs(grad)) < self.tol:
                self.n_iter_ = iteration - 1
                break
            weights = p * (1.0 - p)
            xw = x * weights[:, None]
            hess = np.empty((d + 1, d + 1))
            hess[0, 0] = weights.sum()
            hess[0, 1:] = hess[1:, 0] = xw.sum(axis=0)
            hess[1:, 1:] = x.T @ xw + np.eye(d) / self.c
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            scale = 1.0
            for _ in range(50):
                candidate = beta - scale * step
                new_obj = self._objective_l2(x, y, candidate)
                if new_obj <= obj:
                    break
                scale /= 2.0
            beta = beta - scale * step
            if not np.all(np.isfinite(beta)):
                raise TrainingDivergedError(iteration)
            if abs(obj - new_obj) < self.tol * max(1.0, abs(obj)):
                obj = new_obj
                self.n_iter_ = iteration
                break
            obj = new_obj
        else:
            self.n_iter_ = self.max_iter
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]

    # --- L1: coordinate descent on reweighted least squares ---

    def _fit_l1(self, x, y):
        n, d = x.shape
        lam = 1.0 / self.c
        coef = np.zeros(d)
        intercept = 0.0
        for iteration in range(1, self.max_iter + 1):
            z = x @ coef + intercept
            p = _sigmoid(z)
            weights = np.maximum(p * (1.0 - p), _WEIGHT_FLOOR)
            residual = (y - p) / weights
            col_sq = weights @ (x * x)
            sum_w = weights.sum()
            biggest_move = 0.0
            for _ in range(200):
                inner_move = 0.0
                new_intercept = intercept + (weights @ residual) / sum_w
                delta = new_intercept - intercept
                if delta != 0.0:
                    residual -= delta
                    intercept = new_intercept
                    inner_move = max(inner_move, abs(delta))
                for j in range(d):
                    rho = weights @ (x[:, j] * residual) + col_sq[j] * coef[j]
                    new_cj = _soft_threshold(rho, lam) / col_sq[j]
                    delta = new_cj - coef[j]
                    if delta != 0.0:
                        residual -= x[:, j] * delta
                        coef[j] = new_cj
                        inner_move = max(inner_move, abs(delta))
                biggest_move = max(biggest_move, inner_move)
                if inner_move < 0.1 * self.tol:
                    break
            if not np.all(np.isfinite(coef)):
                raise TrainingDivergedError(iteration)
            self.n_iter_ = iteration
            if biggest_move < self.tol:
                break
        self.intercept_ = float(intercept)
        self.coef_ = coef

    # --- shared interface ---

    def decision_function(self, x) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("classifier is not fitted")
        return np.asarray(x, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict_proba(self, x) -> np.ndarray:
        return _sigmoid(self.decision_function(x))

    def predict(self, x) -> np.ndarray:
        return (self.decision_function(x) >= 0.0).astype(np.int64)

    def coefficients(self) -> np.ndarray | None:
        return None if self.coef_ is None else self.coef_.copy()

    def feature_scores(self) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("classifier is not fitted")
        return np.abs(self.coef_)

    def payload(self) -> dict:
        return {
            "coef": list(map(float, self.coef_)),
            "intercept": self.intercept_,
            "n_iter": self.n_iter_,
        }

    def load_payload(self, payload: dict) -> "LogisticClassifier":
        self.coef_ = np.array(payload["coef"], dtype=np.float64)
        self.intercept_ = float(payload["intercept"])
        self.n_iter_ = int(payload["n_iter"])
        return self
