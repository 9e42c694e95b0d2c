"""Linear discriminant analysis with three interchangeable solvers.

All three routes compute the same discriminant direction w solving
S w = (mu1 - mu0) against the pooled within-class covariance S (maximum
likelihood form, divided by n), then share one intercept formula. Having
independent linear-algebra paths that must agree is a cheap standing
cross-check on the fitted model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateLabelsError

SOLVERS = ("svd", "lsqr", "eigen")
_RIDGE = 1e-6
_SINGULAR_THRESHOLD = 1e-12


def pooled_covariance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Within-class covariance, normalized by the total row count.

    The maximum-likelihood 1/n form keeps the fit invariant under exact
    duplication of the dataset.
    """
    n = x.shape[0]
    scatter = np.zeros((x.shape[1], x.shape[1]))
    for cls in (0, 1):
        rows = x[y == cls]
        centered = rows - rows.mean(axis=0)
        scatter += centered.T @ centered
    return scatter / n


def _solve(s: np.ndarray, d: np.ndarray, solver: str) -> np.ndarray:
    if solver == "svd":
        u, sing, vt = np.linalg.svd(s)
        cutoff = _SINGULAR_THRESHOLD * sing.max()
        inv = np.where(sing > cutoff, 1.0 / np.where(sing > cutoff, sing, 1.0), 0.0)
        return vt.T @ (inv * (u.T @ d))
    if solver == "lsqr":
        w, *_ = np.linalg.lstsq(s, d, rcond=None)
        return w
    if solver == "eigen":
        vals, vecs = np.linalg.eigh(s)
        cutoff = _SINGULAR_THRESHOLD * vals.max()
        inv = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
        return vecs @ (inv * (vecs.T @ d))
    raise ValueError(f"unknown solver {solver!r}, expected one of {SOLVERS}")


@dataclass
class LdaClassifier:
    solver: str = "svd"
    coef_: np.ndarray | None = None
    intercept_: float = 0.0
    ridged: bool = False

    def fit(self, x, y) -> "LdaClassifier":
        if self.solver not in SOLVERS:
            raise ValueError(
                f"unknown solver {self.solver!r}, expected one of {SOLVERS}"
            )
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n1 = int((y == 1).sum())
        n0 = int((y == 0).sum())
        if n0 == 0 or n1 == 0:
            raise DegenerateLabelsError(
                f"discriminant needs both classes, got {n1} positives of {y.size}"
            )
        mu0 = x[y == 0].mean(axis=0)
        mu1 = x[y == 1].mean(axis=0)
        s = pooled_covariance(x, y)

        eigvals = np.linalg.eigvalsh(s)
        self.ridged = False
        if eigvals.min() <= _SINGULAR_THRESHOLD * max(eigvals.max(), 1.0):
            warnings.warn(
                "pooled covariance is singular; adding a small ridge",
                RuntimeWarning,
                stacklevel=2,
            )
            s = s + _RIDGE * np.eye(s.shape[0])
            self.ridged = True

        w = _solve(s, mu1 - mu0, self.solver)
        self.coef_ = w
        midpoint = (mu0 + mu1) / 2.0
        self.intercept_ = float(-w @ midpoint + np.log(n1 / n0))
        return self

    def decision_function(self, x) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("classifier is not fitted")
        return np.asarray(x, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict_proba(self, x) -> np.ndarray:
        z = self.decision_function(x)
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

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
            "ridged": self.ridged,
        }

    def load_payload(self, payload: dict) -> "LdaClassifier":
        self.coef_ = np.array(payload["coef"], dtype=np.float64)
        self.intercept_ = float(payload["intercept"])
        self.ridged = bool(payload["ridged"])
        return self
