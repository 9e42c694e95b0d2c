"""Stratified fold assignment shared by cross-validation and calibration."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateLabelsError


def stratified_fold_ids(
    labels: np.ndarray, n_folds: int, rng: np.random.Generator
) -> np.ndarray:
    """Assign each row a fold id in [0, n_folds) preserving class balance.

    Rows of each class are shuffled, then dealt round-robin across folds,
    so fold sizes differ by at most one per class. Requires every class
    to fill every fold at least once.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise DegenerateLabelsError(
            f"stratified folds need both classes, got only {classes.tolist()}"
        )
    smallest = int(counts.min())
    if smallest < n_folds:
        raise DegenerateLabelsError(
            f"cannot build {n_folds} folds: the rarest class has only "
            f"{smallest} rows"
        )
    fold_of = np.empty(labels.size, dtype=np.int64)
    for cls in classes:
        rows = np.flatnonzero(labels == cls)
        rows = rows[rng.permutation(rows.size)]
        fold_of[rows] = np.arange(rows.size) % n_folds
    return fold_of


def fold_indices(
    fold_of: np.ndarray, fold: int
) -> tuple[np.ndarray, np.ndarray]:
    """Train and test row indices for one fold id."""
    test = np.flatnonzero(fold_of == fold)
    train = np.flatnonzero(fold_of != fold)
    return train, test
