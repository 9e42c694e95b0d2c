"""Two-sample statistics, 1-D discriminant projections, and learning gain.

The t-distribution tail probabilities are computed from a continued-fraction
evaluation of the regularized incomplete beta function, so the module has no
dependency beyond numpy. Accuracy is checked in the test suite against
tabulated critical values and an independent library implementation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateVarianceError,
    ShapeError,
    UndefinedNlgError,
)

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3.0e-14
_FPMIN = 1.0e-300

RIDGE = 1.0e-6


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function, evaluated with
    # the modified Lentz method.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise RuntimeError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|) for a Student t variable with `dof` degrees of freedom."""
    if dof <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    if not math.isfinite(t):
        return 0.0
    x = dof / (dof + t * t)
    return regularized_incomplete_beta(0.5 * dof, 0.5, x)


def t_upper_tail_p(t: float, dof: float) -> float:
    """P(T >= t), the one-tailed upper probability."""
    half = 0.5 * t_two_sided_p(t, dof)
    return half if t >= 0 else 1.0 - half


def t_critical_value(alpha_two_sided: float, dof: float) -> float:
    """The t value whose two-sided tail probability equals alpha."""
    if not 0.0 < alpha_two_sided < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha_two_sided}")
    lo, hi = 0.0, 1.0
    while t_two_sided_p(hi, dof) > alpha_two_sided:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("bisection bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_two_sided_p(mid, dof) > alpha_two_sided:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TTestResult:
    """Two-sample comparison of group a against group b.

    The t score carries the sign of mean_a - mean_b, so the caller's
    argument order decides how a difference reads.
    """

    t_score: float
    p_value: float
    cohens_d: float
    dof: float
    mean_a: float
    mean_b: float
    std_a: float
    std_b: float
    n_a: int
    n_b: int
    degenerate: bool = False


def _as_sample(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"sample {name} must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise ValueError(f"sample {name} needs at least 2 values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"sample {name} holds non-finite values")
    return arr


def t_test(a, b, equal_var: bool = True) -> TTestResult:
    """Two-sample t test of a against b.

    The default is the pooled-variance form; `equal_var=False` switches to
    the unequal-variance (Welch) form with Welch-Satterthwaite degrees of
    freedom. Cohen's d always uses the pooled standard deviation.

    Raises DegenerateVarianceError when both samples are constant but their
    means differ; two identical constants compare as t=0, p=1, d=0.
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    n_a, n_b = a.size, b.size
    mean_a, mean_b = float(a.mean()), float(b.mean())

    # Constancy is judged by max == min, which is exact; the computed
    # variance of a constant sample can round to a tiny nonzero value.
    if a.max() == a.min() and b.max() == b.min():
        if a[0] == b[0]:
            return TTestResult(
                0.0, 1.0, 0.0, float(n_a + n_b - 2),
                mean_a, mean_b, 0.0, 0.0, n_a, n_b,
            )
        raise DegenerateVarianceError(
            "both samples are constant but their values differ"
        )

    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    pooled_var = ((n_a - 1) * var_a + (n_b - 1) * var_b) / (n_a + n_b - 2)
    diff = mean_a - mean_b
    if pooled_var <= 0.0:
        raise DegenerateVarianceError("pooled variance underflowed to zero")

    pooled_std = math.sqrt(pooled_var)
    if equal_var:
        se = pooled_std * math.sqrt(1.0 / n_a + 1.0 / n_b)
        dof = float(n_a + n_b - 2)
    else:
        se_sq = var_a / n_a + var_b / n_b
        if se_sq == 0.0:
            raise DegenerateVarianceError("zero standard error in Welch form")
        se = math.sqrt(se_sq)
        dof = se_sq**2 / (
            (var_a / n_a) ** 2 / (n_a - 1) + (var_b / n_b) ** 2 / (n_b - 1)
        )
    t = diff / se
    return TTestResult(
        t_score=t,
        p_value=t_two_sided_p(t, dof),
        cohens_d=diff / pooled_std,
        dof=dof,
        mean_a=mean_a,
        mean_b=mean_b,
        std_a=math.sqrt(var_a),
        std_b=math.sqrt(var_b),
        n_a=n_a,
        n_b=n_b,
    )


def one_tailed_mean_test(a, b, equal_var: bool = True) -> tuple[float, TTestResult]:
    """Test H1: mean(a) > mean(b); returns the upper-tail p and the full result."""
    result = t_test(a, b, equal_var=equal_var)
    if result.degenerate or (result.t_score == 0.0 and result.p_value == 1.0):
        return 0.5, result
    return t_upper_tail_p(result.t_score, result.dof), result


def skill_ttest_map(
    states_stem: np.ndarray, states_nonstem: np.ndarray
) -> list[TTestResult]:
    """Per-skill comparison of knowledge states between the two groups.

    Each column is tested as non-STEM minus STEM, so a negative t score
    means the STEM group holds the higher state on that skill. Columns with
    no variance in either group come back flagged as degenerate rather than
    raising.
    """
    stem = np.asarray(states_stem, dtype=np.float64)
    non = np.asarray(states_nonstem, dtype=np.float64)
    if stem.ndim != 2 or non.ndim != 2:
        raise ShapeError("state matrices must be 2-D (students x skills)")
    if stem.shape[1] != non.shape[1]:
        raise ShapeError(
            f"skill counts differ: {stem.shape[1]} vs {non.shape[1]}"
        )
    results = []
    for j in range(stem.shape[1]):
        try:
            results.append(t_test(non[:, j], stem[:, j]))
        except DegenerateVarianceError:
            results.append(
                TTestResult(
                    t_score=float("nan"),
                    p_value=float("nan"),
                    cohens_d=float("nan"),
                    dof=float(stem.shape[0] + non.shape[0] - 2),
                    mean_a=float(non[:, j].mean()),
                    mean_b=float(stem[:, j].mean()),
                    std_a=float(non[:, j].std(ddof=1)),
                    std_b=float(stem[:, j].std(ddof=1)),
                    n_a=non.shape[0],
                    n_b=stem.shape[0],
                    degenerate=True,
                )
            )
    return results


@dataclass(frozen=True)
class ProjectionResult:
    """Fisher-direction 1-D projection of a feature matrix."""

    values: np.ndarray
    direction: np.ndarray
    ridged: bool


def lda_project_1d(features: np.ndarray, labels: np.ndarray) -> ProjectionResult:
    """Project rows of `features` onto the Fisher discriminant direction.

    The direction solves pooled_covariance @ w = mean(class 1) - mean(class 0).
    A singular pooled covariance falls back to a small ridge on the diagonal
    and flags the result.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ShapeError("labels must be one per feature row")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise DegenerateVarianceError(
            f"need both classes 0 and 1, got {classes.tolist()}"
        )
    x0 = x[y == 0]
    x1 = x[y == 1]
    mean0 = x0.mean(axis=0)
    mean1 = x1.mean(axis=0)
    centered = np.vstack([x0 - mean0, x1 - mean1])
    pooled = centered.T @ centered / x.shape[0]
    diff = mean1 - mean0

    ridged = False
    eigvals = np.linalg.eigvalsh(pooled)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1.0):
        pooled = pooled + RIDGE * np.eye(pooled.shape[0])
        ridged = True
        warnings.warn(
            "singular pooled covariance; applying ridge fallback",
            RuntimeWarning,
            stacklevel=2,
        )
    direction = np.linalg.solve(pooled, diff)
    return ProjectionResult(values=x @ direction, direction=direction, ridged=ridged)


def histogram_tables(
    projections: np.ndarray, labels: np.ndarray, bins: int = 30
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Equal-width class histograms over the pooled projection range.

    Returns (bin_edges, counts for class 0, counts for class 1).
    """
    values = np.asarray(projections, dtype=np.float64)
    y = np.asarray(labels)
    if values.shape != y.shape:
        raise ShapeError("projections and labels must align")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts0, _ = np.histogram(values[y == 0], bins=edges)
    counts1, _ = np.histogram(values[y == 1], bins=edges)
    return edges, counts0, counts1


def overlap_coefficient(counts_a: np.ndarray, counts_b: np.ndarray) -> float:
    """Shared area of two histograms after normalizing each to sum 1."""
    a = np.asarray(counts_a, dtype=np.float64)
    b = np.asarray(counts_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("histograms must share their binning")
    if a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("each histogram needs at least one observation")
    return float(np.minimum(a / a.sum(), b / b.sum()).sum())


def nlg_from_step_means(step_means: np.ndarray, window: int = 10) -> float:
    """Normalized learning gain from a per-step mean-knowledge series.

    pre is the average of the first min(window, T) entries, post of the
    last min(window, T); the gain is (post - pre) / (1 - pre).
    """
    series = np.asarray(step_means, dtype=np.float64)
    if series.ndim != 1:
        raise ShapeError(f"step means must be 1-D, got shape {series.shape}")
    t = series.size
    if t < 2:
        raise ValueError(f"need at least 2 steps, got {t}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    w = min(window, t)
    pre = float(series[:w].mean())
    post = float(series[-w:].mean())
    if pre >= 1.0:
        raise UndefinedNlgError(f"pre-score {pre} is at or above ceiling 1.0")
    return (post - pre) / (1.0 - pre)


def nlg(states: np.ndarray, window: int = 10) -> float:
    """Normalized learning gain of one student's knowledge-state sequence.

    `states` is the (T, M) matrix of per-step skill states; each step is
    first collapsed to its mean across skills.
    """
    values = getattr(states, "values", states)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"states must be 2-D (steps x skills), got {arr.shape}")
    return nlg_from_step_means(arr.mean(axis=1), window=window)


@dataclass(frozen=True)
class NlgResult:
    """Group comparison of per-student normalized learning gains."""

    mean_a: float
    std_a: float
    n_a: int
    mean_b: float
    std_b: float
    n_b: int
    p_one_tailed_pooled: float
    p_one_tailed_welch: float


def nlg_group_test(gains_a: Sequence[float], gains_b: Sequence[float]) -> NlgResult:
    """One-tailed test of H1: group a gains more than group b.

    Emits the pooled-variance p value alongside the unequal-variance form.
    """
    p_pooled, pooled = one_tailed_mean_test(gains_a, gains_b, equal_var=True)
    p_welch, _ = one_tailed_mean_test(gains_a, gains_b, equal_var=False)
    return NlgResult(
        mean_a=pooled.mean_a,
        std_a=pooled.std_a,
        n_a=pooled.n_a,
        mean_b=pooled.mean_b,
        std_b=pooled.std_b,
        n_b=pooled.n_b,
        p_one_tailed_pooled=p_pooled,
        p_one_tailed_welch=p_welch,
    )
