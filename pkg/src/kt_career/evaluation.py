"""Cross-validated scoring, hyperparameter grids, and feature elimination.

Model selection is deliberately boring: stratified folds fixed by seed,
exhaustive grids walked in declaration order, ties broken by whichever
candidate came first. Feature scaling is fit inside each training fold
so no statistic of a test fold ever leaks into the model. Every fold
is scored on both its training and its held-out rows, and report
aggregates carry the mean and the population standard deviation over
folds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .classifiers import (
    ClassifierSpec,
    GbdtSpec,
    LdaSpec,
    LrSpec,
    SvmSpec,
    family_of,
    fit_classifier,
    needs_standardized_features,
)
from .errors import UnsupportedFamilyError
from .features import FeatureMatrix, Standardizer
from .folds import fold_indices, stratified_fold_ids
from .metrics import auc, average_precision, combined_score, rmse

RFE_SIZES = (5, 8, 10, 12, 15, 20, "all")

_C_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)


def default_grid(family: str) -> list[ClassifierSpec]:
    """Candidate hyperparameters per family, in tie-breaking order."""
    if family == "gbdt":
        return [
            GbdtSpec(
                n_estimators=n, max_depth=depth, min_samples_leaf=leaf
            )
            for n in (10, 25, 50, 120, 300)
            for depth in (2, 3, 5, 8)
            for leaf in (1, 2, 5, 10)
        ]
    if family == "lda":
        return [LdaSpec(solver=s) for s in ("svd", "lsqr", "eigen")]
    if family == "lr":
        return [
            LrSpec(c=c, penalty=p) for c in _C_GRID for p in ("l1", "l2")
        ]
    if family == "svm":
        return [SvmSpec(c=c) for c in _C_GRID]
    raise UnsupportedFamilyError(f"no hyperparameter grid for family {family!r}")


@dataclass(frozen=True)
class MetricSet:
    auc: float
    rmse: float
    average_precision: float

    @property
    def combined(self) -> float:
        return combined_score(self.auc, self.rmse)

    @classmethod
    def from_predictions(cls, probs, labels) -> "MetricSet":
        return cls(
            auc=auc(probs, labels),
            rmse=rmse(probs, labels),
            average_precision=average_precision(probs, labels),
        )


@dataclass(frozen=True)
class FoldScore:
    fold: int
    train: MetricSet
    test: MetricSet


METRIC_NAMES = ("average_precision", "auc", "rmse", "combined")


@dataclass
class CvResult:
    spec: ClassifierSpec
    folds: list[FoldScore]

    def values(self, metric: str, split: str = "test") -> np.ndarray:
        if split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {split!r}")
        if metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {metric!r}")
        return np.array(
            [getattr(getattr(f, split), metric) for f in self.folds]
        )

    def mean(self, metric: str, split: str = "test") -> float:
        return float(self.values(metric, split).mean())

    def std(self, metric: str, split: str = "test") -> float:
        # population form: the k folds are the whole population of folds
        return float(self.values(metric, split).std())

    @property
    def mean_auc(self) -> float:
        return self.mean("auc")

    @property
    def mean_rmse(self) -> float:
        return self.mean("rmse")

    @property
    def mean_average_precision(self) -> float:
        return self.mean("average_precision")

    @property
    def mean_combined(self) -> float:
        return self.mean("combined")


def _fold_metrics(spec, x_train, y_train, x_test, y_test) -> tuple[MetricSet, MetricSet]:
    if needs_standardized_features(spec):
        scaler = Standardizer(x_train)
        x_train = scaler.transform(x_train)
        x_test = scaler.transform(x_test)
    model = fit_classifier(spec, x_train, y_train)
    train = MetricSet.from_predictions(model.predict_proba(x_train), y_train)
    test = MetricSet.from_predictions(model.predict_proba(x_test), y_test)
    return train, test


def cross_validate(
    spec: ClassifierSpec,
    matrix: FeatureMatrix,
    n_folds: int = 5,
    seed: int = 0,
) -> CvResult:
    """Stratified k-fold scores for one hyperparameter setting."""
    rng = np.random.default_rng(seed)
    fold_of = stratified_fold_ids(matrix.y, n_folds, rng)
    scores = []
    for fold in range(n_folds):
        train_idx, test_idx = fold_indices(fold_of, fold)
        train, test = _fold_metrics(
            spec,
            matrix.x[train_idx],
            matrix.y[train_idx],
            matrix.x[test_idx],
            matrix.y[test_idx],
        )
        scores.append(FoldScore(fold=fold, train=train, test=test))
    return CvResult(spec=spec, folds=scores)


@dataclass
class GridSearchResult:
    family: str
    best: CvResult
    table: list[CvResult] = field(default_factory=list)

    @property
    def best_spec(self) -> ClassifierSpec:
        return self.best.spec


def grid_search(
    family: str,
    matrix: FeatureMatrix,
    n_folds: int = 5,
    seed: int = 0,
    grid: list[ClassifierSpec] | None = None,
) -> GridSearchResult:
    """Walk the grid in order; strict improvement on the held-out combined
    score wins, so exact ties keep the earliest candidate."""
    candidates = default_grid(family) if grid is None else list(grid)
    if not candidates:
        raise ValueError("empty hyperparameter grid")
    best: CvResult | None = None
    table = []
    for spec in candidates:
        if family_of(spec) != family:
            raise ValueError(
                f"grid for family {family!r} contains a "
                f"{family_of(spec)!r} spec"
            )
        result = cross_validate(spec, matrix, n_folds=n_folds, seed=seed)
        table.append(result)
        if best is None or result.mean_combined > best.mean_combined:
            best = result
    return GridSearchResult(family=family, best=best, table=table)


@dataclass
class RfeResult:
    elimination_order: list[str]
    subsets: dict[int, list[str]]
    scores: dict[int, CvResult]
    best_size: int
    best_features: list[str]


def _effective_sizes(sizes, n_features: int) -> list[int]:
    out = []
    for size in sizes:
        value = n_features if size == "all" else int(size)
        if 1 <= value <= n_features and value not in out:
            out.append(value)
    if not out:
        raise ValueError(
            f"no usable subset sizes for {n_features} features from {sizes!r}"
        )
    return sorted(out)


def rfe(
    spec: ClassifierSpec,
    matrix: FeatureMatrix,
    n_folds: int = 5,
    seed: int = 0,
    sizes=RFE_SIZES,
) -> RfeResult:
    """Backward elimination one feature at a time.

    Each round fits on all rows (scaled when the family wants it) and
    drops the feature with the smallest ranking score, earliest index on
    ties. Requested subset sizes are then re-scored with plain
    cross-validation of the surviving columns.
    """
    if isinstance(spec, SvmSpec):
        raise UnsupportedFamilyError(
            "feature elimination needs per-feature rankings, which the "
            "svm family does not provide"
        )
    names = list(matrix.names)
    eliminated: list[str] = []
    nested: dict[int, list[str]] = {len(names): list(names)}
    current = list(names)
    while len(current) > 1:
        sub = matrix.select(current)
        x = sub.x
        if needs_standardized_features(spec):
            x = Standardizer(x).transform(x)
        model = fit_classifier(spec, x, sub.y)
        scores = model.feature_scores()
        weakest = int(np.argmin(scores))
        eliminated.append(current[weakest])
        current = current[:weakest] + current[weakest + 1 :]
        nested[len(current)] = list(current)

    sizes_to_score = _effective_sizes(sizes, len(names))
    scored: dict[int, CvResult] = {}
    best_size = None
    best_value = -np.inf
    for size in sizes_to_score:
        subset = nested[size]
        result = cross_validate(
            spec, matrix.select(subset), n_folds=n_folds, seed=seed
        )
        scored[size] = result
        if result.mean_combined > best_value:
            best_value = result.mean_combined
            best_size = size
    return RfeResult(
        elimination_order=eliminated,
        subsets={size: nested[size] for size in sizes_to_score},
        scores=scored,
        best_size=best_size,
        best_features=nested[best_size],
    )


@dataclass
class NestedCvResult:
    family: str
    outer_folds: list[FoldScore]
    chosen_specs: list[ClassifierSpec]

    @property
    def mean_auc(self) -> float:
        return float(np.mean([f.test.auc for f in self.outer_folds]))

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([f.test.rmse for f in self.outer_folds]))

    @property
    def mean_combined(self) -> float:
        return float(np.mean([f.test.combined for f in self.outer_folds]))


def nested_cv(
    family: str,
    matrix: FeatureMatrix,
    outer_folds: int = 5,
    inner_folds: int = 5,
    seed: int = 0,
    grid: list[ClassifierSpec] | None = None,
) -> NestedCvResult:
    """Honest generalization estimate: hyperparameters are re-chosen
    inside every outer training split, so the outer test rows never
    influence the selection."""
    rng = np.random.default_rng(seed)
    fold_of = stratified_fold_ids(matrix.y, outer_folds, rng)
    outer_scores = []
    chosen = []
    for fold in range(outer_folds):
        train_idx, test_idx = fold_indices(fold_of, fold)
        inner = FeatureMatrix(
            names=list(matrix.names),
            x=matrix.x[train_idx].copy(),
            y=matrix.y[train_idx].copy(),
            student_ids=[matrix.student_ids[i] for i in train_idx],
        )
        search = grid_search(
            family, inner, n_folds=inner_folds, seed=seed + 1 + fold, grid=grid
        )
        chosen.append(search.best_spec)
        train, test = _fold_metrics(
            search.best_spec,
            matrix.x[train_idx],
            matrix.y[train_idx],
            matrix.x[test_idx],
            matrix.y[test_idx],
        )
        outer_scores.append(FoldScore(fold=fold, train=train, test=test))
    return NestedCvResult(
        family=family, outer_folds=outer_scores, chosen_specs=chosen
    )


@dataclass(frozen=True)
class EvalRow:
    """One (feature set, family) line of the evaluation report."""

    feature_set: str
    family: str
    cv: CvResult
    selected_features: list[str] | None = None
    nested: NestedCvResult | None = None

    @property
    def best_spec(self) -> ClassifierSpec:
        return self.cv.spec


def spec_text(spec: ClassifierSpec) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(vars(spec).items()))


EVAL_REPORT_COLUMNS = (
    ["feature_set", "family"]
    + [
        f"{split}_{metric}_{stat}"
        for split in ("test", "train")
        for metric in METRIC_NAMES
        for stat in ("mean", "std")
    ]
    + ["best_spec", "selected_features", "nested_auc", "nested_combined"]
)


def write_eval_report(path, rows: list[EvalRow]) -> None:
    """One CSV row per (feature set, family) pairing, Table-style column
    order: AP, AUC, RMSE, combined; test aggregates before train."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVAL_REPORT_COLUMNS)
        for row in rows:
            record = [row.feature_set, row.family]
            for split in ("test", "train"):
                for metric in METRIC_NAMES:
                    record.append(repr(row.cv.mean(metric, split)))
                    record.append(repr(row.cv.std(metric, split)))
            record.append(spec_text(row.best_spec))
            record.append(
                ""
                if row.selected_features is None
                else "|".join(row.selected_features)
            )
            if row.nested is None:
                record.extend(["", ""])
            else:
                record.append(repr(float(row.nested.mean_auc)))
                record.append(repr(float(row.nested.mean_combined)))
            writer.writerow(record)


def read_eval_report(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
