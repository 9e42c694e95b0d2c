"""Feature assembly for the career-label classifiers.

Three feature modes are supported: per-skill knowledge states read off
the final step of a trained tracing model ("kt"), the ten tabular
profile attributes ("sp"), and their concatenation ("kt_sp", knowledge
block first). Matrices carry explicit column names end to end so that
feature selection can report which signals survived.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import PROFILE_FEATURE_NAMES, LabeledStudent
from .dkt.model import DktParams, forward
from .errors import FeatureValidationError, SchemaError

FEATURE_MODES = ("sp", "kt", "kt_sp")


def last_knowledge_states(params: DktParams, sequences) -> dict[str, np.ndarray]:
    """Final-step knowledge state per student, from full unsplit runs."""
    out: dict[str, np.ndarray] = {}
    for seq in sequences:
        out[seq.student_id] = forward(params, seq).last_state.copy()
    return out


@dataclass
class FeatureMatrix:
    """Named feature columns with aligned labels."""

    names: list[str]
    x: np.ndarray
    y: np.ndarray
    student_ids: list[str]

    def __post_init__(self):
        n, d = self.x.shape
        if len(self.names) != d:
            raise FeatureValidationError(
                f"{len(self.names)} column names for {d} columns"
            )
        if self.y.shape != (n,) or len(self.student_ids) != n:
            raise FeatureValidationError(
                "labels and student ids must align with the feature rows"
            )

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def select(self, keep_names: list[str]) -> "FeatureMatrix":
        index = {name: i for i, name in enumerate(self.names)}
        missing = [n for n in keep_names if n not in index]
        if missing:
            raise FeatureValidationError(f"unknown feature names: {missing}")
        cols = [index[n] for n in keep_names]
        return FeatureMatrix(
            names=list(keep_names),
            x=self.x[:, cols].copy(),
            y=self.y.copy(),
            student_ids=list(self.student_ids),
        )


def knowledge_feature_names(skill_names: list[str]) -> list[str]:
    return [f"know_{name}" for name in skill_names]


def build_feature_matrix(
    mode: str,
    students: list[LabeledStudent],
    states: dict[str, np.ndarray] | None = None,
    skill_names: list[str] | None = None,
) -> FeatureMatrix:
    """Assemble the design matrix for one feature mode.

    Knowledge modes need a state vector for every labeled student and
    the skill-name list that gives the state columns their names.
    """
    if mode not in FEATURE_MODES:
        raise FeatureValidationError(
            f"unknown feature mode {mode!r}, expected one of {FEATURE_MODES}"
        )
    if not students:
        raise FeatureValidationError("no labeled students to build features from")

    blocks: list[np.ndarray] = []
    names: list[str] = []

    if mode in ("kt", "kt_sp"):
        if states is None or skill_names is None:
            raise FeatureValidationError(
                f"mode {mode!r} needs knowledge states and skill names"
            )
        missing = [s.profile.student_id for s in students if s.profile.student_id not in states]
        if missing:
            raise FeatureValidationError(
                f"no knowledge state for students: {missing[:5]}"
                + ("..." if len(missing) > 5 else "")
            )
        m = len(skill_names)
        kt = np.empty((len(students), m))
        for row, student in enumerate(students):
            vec = np.asarray(states[student.profile.student_id], dtype=np.float64)
            if vec.shape != (m,):
                raise FeatureValidationError(
                    f"knowledge state for {student.profile.student_id} has shape "
                    f"{vec.shape}, expected ({m},)"
                )
            kt[row] = vec
        blocks.append(kt)
        names.extend(knowledge_feature_names(skill_names))

    if mode in ("sp", "kt_sp"):
        sp = np.stack([s.profile.feature_values() for s in students])
        blocks.append(sp)
        names.extend(PROFILE_FEATURE_NAMES)

    x = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]
    y = np.array([s.label for s in students], dtype=np.int64)
    ids = [s.profile.student_id for s in students]
    _check_finite(x, names, ids)
    return FeatureMatrix(names=names, x=x, y=y, student_ids=ids)


def _check_finite(x: np.ndarray, names: list[str], ids: list[str]) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise FeatureValidationError(
            f"non-finite value in feature {names[col]!r} for student {ids[row]!r}"
        )


class Standardizer:
    """Column-wise zero-mean unit-variance scaling fit on training rows.

    Columns that never vary keep their mean subtracted but divide by one;
    they are flagged so callers can report dead features instead of
    silently producing zeros divided by zero.
    """

    def __init__(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise FeatureValidationError(
                f"standardizer needs a non-empty 2-D matrix, got shape {x.shape}"
            )
        self.mean_ = x.mean(axis=0)
        # exact constancy test: identical entries can still produce a tiny
        # nonzero variance through rounding of the mean
        self.constant_columns = np.array(
            [col.max() == col.min() for col in x.T], dtype=bool
        )
        scale = x.std(axis=0)
        scale[self.constant_columns] = 1.0
        self.scale_ = scale

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean_) / self.scale_


def write_feature_matrix(path, matrix: FeatureMatrix) -> None:
    """CSV with a student id column, one column per feature, and the label."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["student_id"] + matrix.names + ["label"])
        for row in range(matrix.x.shape[0]):
            writer.writerow(
                [matrix.student_ids[row]]
                + [repr(float(v)) for v in matrix.x[row]]
                + [str(int(matrix.y[row]))]
            )


def read_feature_matrix(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty feature file") from None
        if len(header) < 3 or header[0] != "student_id" or header[-1] != "label":
            raise SchemaError(
                f"{path}: expected header student_id,<features...>,label"
            )
        names = header[1:-1]
        ids: list[str] = []
        rows: list[list[float]] = []
        labels: list[int] = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(
                    f"{path}:{line_no}: {len(rec)} fields, expected {len(header)}"
                )
            ids.append(rec[0])
            try:
                rows.append([float(v) for v in rec[1:-1]])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from exc
            if rec[-1] not in ("0", "1"):
                raise SchemaError(
                    f"{path}:{line_no}: label must be 0 or 1, got {rec[-1]!r}"
                )
            labels.append(int(rec[-1]))
    if not rows:
        raise SchemaError(f"{path}: no feature rows")
    x = np.array(rows, dtype=np.float64)
    _check_finite(x, names, ids)
    return FeatureMatrix(
        names=names, x=x, y=np.array(labels, dtype=np.int64), student_ids=ids
    )
