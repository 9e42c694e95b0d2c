"""RBF-kernel support vector machine trained by sequential minimal
optimization, with sigmoid-calibrated probabilities.

The dual problem is solved pair by pair: an outer loop alternates full
sweeps with sweeps over free multipliers, the partner index is chosen by
the largest error gap with deterministic fallbacks, so the optimizer is
exactly reproducible. Probabilities come from a sigmoid fit to
out-of-fold decision values, never to in-sample ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabelsError, UnsupportedFamilyError
from ..folds import fold_indices, stratified_fold_ids

_ALPHA_SNAP = 1e-8
_STEP_EPS = 1e-12
_MAX_SWEEPS = 10000


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def resolve_gamma(gamma, x: np.ndarray) -> float:
    """The literal value, or the data-scaled default 1/(d * var(X))."""
    if gamma == "scale":
        spread = float(x.var())
        if spread == 0.0:
            spread = 1.0
        return 1.0 / (x.shape[1] * spread)
    value = float(gamma)
    if value <= 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    return value


class _SmoSolver:
    """Dual optimization state for one binary problem with targets +-1."""

    def __init__(self, kernel: np.ndarray, targets: np.ndarray, c: float, tol: float):
        self.k = kernel
        self.t = targets
        self.c = c
        self.tol = tol
        n = targets.size
        self.alpha = np.zeros(n)
        self.b = 0.0
        # g[i] = sum_j alpha_j t_j K[i, j]; decision f(i) = g[i] + b
        self.g = np.zeros(n)
        self.sweeps = 0

    def _errors(self) -> np.ndarray:
        return self.g + self.b - self.t

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alpha[i1], self.alpha[i2]
        t1, t2 = self.t[i1], self.t[i2]
        e1 = self.g[i1] + self.b - t1
        e2 = self.g[i2] + self.b - t2
        s = t1 * t2
        if s > 0:
            low = max(0.0, a1 + a2 - self.c)
            high = min(self.c, a1 + a2)
        else:
            low = max(0.0, a2 - a1)
            high = min(self.c, self.c + a2 - a1)
        if low >= high:
            return False
        k11 = self.k[i1, i1]
        k12 = self.k[i1, i2]
        k22 = self.k[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta <= 0:
            # only possible for coincident rows under an RBF kernel
            return False
        a2_new = a2 + t2 * (e1 - e2) / eta
        a2_new = min(max(a2_new, low), high)
        if a2_new < _ALPHA_SNAP:
            a2_new = 0.0
        elif a2_new > self.c - _ALPHA_SNAP:
            a2_new = self.c
        if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        if a1_new < _ALPHA_SNAP:
            a1_new = 0.0
        elif a1_new > self.c - _ALPHA_SNAP:
            a1_new = self.c

        d1 = t1 * (a1_new - a1)
        d2 = t2 * (a2_new - a2)
        b1 = self.b - e1 - d1 * k11 - d2 * k12
        b2 = self.b - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < self.c:
            self.b = b1
        elif 0.0 < a2_new < self.c:
            self.b = b2
        else:
            self.b = (b1 + b2) / 2.0
        self.g += d1 * self.k[i1] + d2 * self.k[i2]
        self.alpha[i1] = a1_new
        self.alpha[i2] = a2_new
        return True

    def examine(self, i2: int) -> bool:
        t2 = self.t[i2]
        a2 = self.alpha[i2]
        e2 = self.g[i2] + self.b - t2
        r2 = e2 * t2
        if not ((r2 < -self.tol and a2 < self.c) or (r2 > self.tol and a2 > 0.0)):
            return False
        free = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.c))
        if free.size > 1:
            errors = self._errors()
            partner = free[int(np.argmax(np.abs(errors[free] - e2)))]
            if self.take_step(int(partner), i2):
                return True
        for i1 in free:
            if self.take_step(int(i1), i2):
                return True
        for i1 in range(self.t.size):
            if self.take_step(i1, i2):
                return True
        return False

    def solve(self) -> None:
        examine_all = True
        changed = 0
        while changed > 0 or examine_all:
            if self.sweeps >= _MAX_SWEEPS:
                break
            self.sweeps += 1
            changed = 0
            if examine_all:
                candidates = range(self.t.size)
            else:
                candidates = np.flatnonzero(
                    (self.alpha > 0.0) & (self.alpha < self.c)
                )
            for i2 in candidates:
                changed += int(self.examine(int(i2)))
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True

    def kkt_violation(self) -> float:
        margins = (self.g + self.b) * self.t
        slack = margins - 1.0
        at_zero = self.alpha == 0.0
        at_c = self.alpha == self.c
        free = ~(at_zero | at_c)
        worst = 0.0
        if at_zero.any():
            worst = max(worst, float(np.max(-slack[at_zero], initial=0.0)))
        if at_c.any():
            worst = max(worst, float(np.max(slack[at_c], initial=0.0)))
        if free.any():
            worst = max(worst, float(np.max(np.abs(slack[free]))))
        return worst


def fit_sigmoid_calibration(
    decisions: np.ndarray, labels: np.ndarray
) -> tuple[float, float]:
    """Fit P(y=1 | d) = 1 / (1 + exp(A d + B)) by damped Newton.

    Targets are smoothed by class counts rather than set to exact 0/1,
    which keeps the fit defined even for perfectly separated decisions.
    """
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(labels == 1, hi, lo)

    a = 0.0
    b = math.log((n_neg + 1.0) / (n_pos + 1.0))

    def objective_stable(a_, b_):
        f = a_ * decisions + b_
        pos = f >= 0
        vals = np.empty_like(f)
        vals[pos] = t[pos] * f[pos] + np.log1p(np.exp(-f[pos]))
        vals[~pos] = (t[~pos] - 1.0) * f[~pos] + np.log1p(np.exp(f[~pos]))
        return float(vals.sum())

    fval = objective_stable(a, b)
    sigma = 1e-12
    for _ in range(100):
        f = a * decisions + b
        p = np.empty_like(f)
        pos = f >= 0
        ef = np.exp(-f[pos])
        p[pos] = ef / (1.0 + ef)
        ef = np.exp(f[~pos])
        p[~pos] = 1.0 / (1.0 + ef)
        pq = p * (1.0 - p)
        h11 = float(decisions @ (decisions * pq)) + sigma
        h22 = float(pq.sum()) + sigma
        h21 = float(decisions @ pq)
        d1 = t - p
        g1 = float(decisions @ d1)
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        improved = False
        while step >= 1e-10:
            new_a = a + step * da
            new_b = b + step * db
            new_f = objective_stable(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                improved = True
                break
            step /= 2.0
        if not improved:
            break
    return a, b


@dataclass
class SvmClassifier:
    c: float = 1.0
    gamma: object = "scale"
    tol: float = 1e-3
    calibration_folds: int = 3
    calibration_seed: int = 0
    gamma_: float = 0.0
    support_x: np.ndarray | None = None
    support_alpha_t: np.ndarray | None = None
    b_: float = 0.0
    platt_a: float = 0.0
    platt_b: float = 0.0
    kkt_violation_: float = math.inf
    train_x_: np.ndarray | None = field(default=None, repr=False)
    train_t_: np.ndarray | None = field(default=None, repr=False)
    train_alpha_: np.ndarray | None = field(default=None, repr=False)

    def _solve_subproblem(self, x, targets):
        kernel = rbf_kernel(x, x, self.gamma_)
        solver = _SmoSolver(kernel, targets, self.c, self.tol)
        solver.solve()
        return solver

    def fit(self, x, y) -> "SvmClassifier":
        if self.c <= 0:
            raise ValueError(f"C must be positive, got {self.c}")
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n_pos = int((y == 1).sum())
        if n_pos == 0 or n_pos == y.size:
            raise DegenerateLabelsError(
                f"svm needs both classes, got {n_pos} positives of {y.size}"
            )
        self.gamma_ = resolve_gamma(self.gamma, x)
        targets = np.where(y == 1, 1.0, -1.0)

        # out-of-fold decision values for the probability sigmoid
        rng = np.random.default_rng(self.calibration_seed)
        fold_of = stratified_fold_ids(y, self.calibration_folds, rng)
        oof = np.empty(y.size)
        for fold in range(self.calibration_folds):
            train, held = fold_indices(fold_of, fold)
            sub = self._solve_subproblem(x[train], targets[train])
            cross = rbf_kernel(x[held], x[train], self.gamma_)
            oof[held] = cross @ (sub.alpha * targets[train]) + sub.b
        self.platt_a, self.platt_b = fit_sigmoid_calibration(oof, y)

        solver = self._solve_subproblem(x, targets)
        self.kkt_violation_ = solver.kkt_violation()
        keep = solver.alpha > 0.0
        self.support_x = x[keep].copy()
        self.support_alpha_t = (solver.alpha * targets)[keep]
        self.b_ = solver.b
        self.train_x_ = x
        self.train_t_ = targets
        self.train_alpha_ = solver.alpha
        return self

    def kkt_violation(self) -> float:
        """Worst optimality-condition violation of the final dual solution.

        Bounded by the training tolerance whenever the optimizer ran to
        completion; coincident opposite-label rows can pin it higher.
        """
        if self.train_x_ is None:
            raise RuntimeError("classifier is not fitted")
        return self.kkt_violation_

    def decision_function(self, x) -> np.ndarray:
        if self.support_x is None:
            raise RuntimeError("classifier is not fitted")
        x = np.asarray(x, dtype=np.float64)
        if self.support_x.shape[0] == 0:
            return np.full(x.shape[0], self.b_)
        cross = rbf_kernel(x, self.support_x, self.gamma_)
        return cross @ self.support_alpha_t + self.b_

    def predict_proba(self, x) -> np.ndarray:
        f = self.platt_a * self.decision_function(x) + self.platt_b
        out = np.empty_like(f)
        pos = f >= 0
        ef = np.exp(-f[pos])
        out[pos] = ef / (1.0 + ef)
        ef = np.exp(f[~pos])
        out[~pos] = 1.0 / (1.0 + ef)
        return out

    def predict(self, x) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(np.int64)

    def coefficients(self) -> None:
        """Kernel machines expose no per-feature weight vector."""
        return None

    def feature_scores(self):
        raise UnsupportedFamilyError(
            "an RBF-kernel svm provides no per-feature ranking"
        )

    def payload(self) -> dict:
        return {
            "gamma_value": self.gamma_,
            "support_x": [list(map(float, row)) for row in self.support_x],
            "support_alpha_t": list(map(float, self.support_alpha_t)),
            "b": self.b_,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
            "kkt_violation": self.kkt_violation_,
        }

    def load_payload(self, payload: dict) -> "SvmClassifier":
        self.gamma_ = float(payload["gamma_value"])
        self.support_x = np.array(payload["support_x"], dtype=np.float64)
        if self.support_x.size == 0:
            self.support_x = self.support_x.reshape(0, 0)
        self.support_alpha_t = np.array(payload["support_alpha_t"], dtype=np.float64)
        self.b_ = float(payload["b"])
        self.platt_a = float(payload["platt_a"])
        self.platt_b = float(payload["platt_b"])
        self.kkt_violation_ = float(payload["kkt_violation"])
        self.train_x_ = self.support_x
        return self
