"""Schemas, parsing, and encoding for clickstream and profile data.

Contents:
    Interaction, StudentSequence  - one answered question and one student's
        time-ordered record of them.
    SkillVocabulary               - bidirectional skill name <-> id mapping.
    StudentProfile, LabeledStudent - tabular per-student attributes and the
        optional STEM label.
    parse_clickstream, parse_profiles - file readers.
    deduplicate_labeled           - first-occurrence dedup with conflict check.
    encode_interaction, decode_interaction - one-hot pair encoding used by the
        recurrent model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    LabelConflictError,
    RowError,
    SchemaError,
    VocabularyError,
)

# Column names of the profile file, in file order. The first is a school-year
# string and is excluded from modeling.
PROFILE_COLUMNS = (
    "SY ASSISTments Usage",
    "NumActions",
    "AveKnow",
    "AveCorrect",
    "AveCarelessness",
    "AveResBored",
    "AveResEngcon",
    "AveResConf",
    "AveResFrust",
    "AveResOfftask",
    "AveResGaming",
)

# Canonical order of the ten numeric attributes used as model features.
PROFILE_FEATURE_NAMES = (
    "NumActions",
    "AveKnow",
    "AveCorrect",
    "AveCarelessness",
    "AveResBored",
    "AveResEngcon",
    "AveResConf",
    "AveResFrust",
    "AveResOfftask",
    "AveResGaming",
)

_CLICKSTREAM_REQUIRED = ("student_id", "skill", "correct")


@dataclass(frozen=True)
class Interaction:
    """One answered question: who, which skill, correct or not, and when.

    `order` is the 0-based position within the student's own sequence.
    """

    student_id: str
    skill_id: int
    correct: int
    order: int

    def __post_init__(self):
        if self.correct not in (0, 1):
            raise ValueError(f"correct must be 0 or 1, got {self.correct!r}")
        if self.skill_id < 0:
            raise ValueError(f"skill_id must be >= 0, got {self.skill_id}")
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")


@dataclass(frozen=True)
class StudentSequence:
    """A single student's interactions, ordered by `order` starting at 0."""

    student_id: str
    interactions: tuple[Interaction, ...]

    def __post_init__(self):
        if not self.interactions:
            raise ValueError(f"empty sequence for student {self.student_id!r}")
        for pos, item in enumerate(self.interactions):
            if item.student_id != self.student_id:
                raise ValueError(
                    f"interaction for {item.student_id!r} in sequence of "
                    f"{self.student_id!r}"
                )
            if item.order != pos:
                raise ValueError(
                    f"student {self.student_id!r}: order values must be "
                    f"contiguous from 0, got {item.order} at position {pos}"
                )

    def __len__(self) -> int:
        return len(self.interactions)

    def skill_array(self) -> np.ndarray:
        return np.array([i.skill_id for i in self.interactions], dtype=np.int64)

    def correct_array(self) -> np.ndarray:
        return np.array([i.correct for i in self.interactions], dtype=np.float64)

    @classmethod
    def from_arrays(cls, student_id: str, skills, corrects) -> "StudentSequence":
        items = tuple(
            Interaction(student_id, int(s), int(c), t)
            for t, (s, c) in enumerate(zip(skills, corrects, strict=True))
        )
        return cls(student_id, items)


class SkillVocabulary:
    """Bidirectional mapping between skill names and dense ids 0..M-1."""

    def __init__(self, names: Iterable[str]):
        self._names = tuple(names)
        self._ids = {name: i for i, name in enumerate(self._names)}
        if len(self._ids) != len(self._names):
            raise VocabularyError("duplicate skill names in vocabulary")
        if not self._names:
            raise VocabularyError("vocabulary must hold at least one skill")

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def size(self) -> int:
        return len(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, SkillVocabulary) and self._names == other._names

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise VocabularyError(f"unknown skill name {name!r}") from None

    def name_of(self, skill_id: int) -> str:
        if not 0 <= skill_id < len(self._names):
            raise VocabularyError(f"skill id {skill_id} out of range")
        return self._names[skill_id]

    @classmethod
    def load(cls, path) -> "SkillVocabulary":
        """Read one skill name per line; line index is the skill id."""
        text = Path(path).read_text(encoding="utf-8")
        names = [line.strip() for line in text.splitlines() if line.strip()]
        return cls(names)

    def save(self, path) -> None:
        Path(path).write_text(
            "".join(f"{name}\n" for name in self._names), encoding="utf-8"
        )


@dataclass(frozen=True)
class StudentProfile:
    """Per-student tabular attributes.

    All fields except `student_id`, `usage_year`, and `num_actions` are
    proportions in [0, 1]. `usage_year` is kept for bookkeeping only and is
    never used as a model feature.
    """

    student_id: str
    usage_year: str
    num_actions: int
    ave_know: float
    ave_correct: float
    ave_carelessness: float
    ave_res_bored: float
    ave_res_engcon: float
    ave_res_conf: float
    ave_res_frust: float
    ave_res_offtask: float
    ave_res_gaming: float

    def __post_init__(self):
        if self.num_actions < 1:
            raise ValueError(
                f"student {self.student_id!r}: num_actions must be >= 1, "
                f"got {self.num_actions}"
            )
        for name, value in zip(PROFILE_FEATURE_NAMES[1:], self.feature_values()[1:]):
            if not 0.0 <= value <= 1.0:
                raise ValueError(
                    f"student {self.student_id!r}: {name} must lie in [0, 1], "
                    f"got {value}"
                )

    def feature_values(self) -> np.ndarray:
        """The ten numeric attributes in PROFILE_FEATURE_NAMES order."""
        return np.array(
            [
                float(self.num_actions),
                self.ave_know,
                self.ave_correct,
                self.ave_carelessness,
                self.ave_res_bored,
                self.ave_res_engcon,
                self.ave_res_conf,
                self.ave_res_frust,
                self.ave_res_offtask,
                self.ave_res_gaming,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class LabeledStudent:
    """A profile together with its binary career label (1 = STEM)."""

    profile: StudentProfile
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def student_id(self) -> str:
        return self.profile.student_id


@dataclass
class ParsedClickstream:
    sequences: list[StudentSequence]
    vocabulary: SkillVocabulary
    rejected_rows: int

    @property
    def total_interactions(self) -> int:
        return sum(len(s) for s in self.sequences)


def parse_clickstream(path, vocabulary: SkillVocabulary | None = None) -> ParsedClickstream:
    """Read a comma-delimited clickstream file into per-student sequences.

    The file must carry a header naming at least `student_id`, `skill`, and
    `correct`; extra columns are ignored. Rows with a missing required field
    are rejected and counted. A present but non-binary correctness value is
    an error. When `vocabulary` is given, unknown skill names are errors;
    otherwise skills are interned in order of first appearance.

    Args:
        path: file to read (UTF-8, LF or CRLF line endings).
        vocabulary: optional fixed skill vocabulary.

    Returns:
        ParsedClickstream with sequences ordered by first appearance of the
        student, the vocabulary, and the rejected-row count.
    """
    path = Path(path)
    per_student: dict[str, list[tuple[int, int]]] = {}
    names: list[str] = []
    name_ids: dict[str, int] = {}
    rejected = 0

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        positions = {}
        for column in _CLICKSTREAM_REQUIRED:
            if column not in header:
                raise SchemaError(f"{path}: missing required column {column!r}")
            positions[column] = header.index(column)
        width = max(positions.values()) + 1

        for row in reader:
            line = reader.line_num
            if len(row) < width:
                rejected += 1
                continue
            student = row[positions["student_id"]].strip()
            skill = row[positions["skill"]].strip()
            correct_text = row[positions["correct"]].strip()
            if not student or not skill or not correct_text:
                rejected += 1
                continue
            if correct_text not in ("0", "1"):
                raise RowError(line, f"correctness must be 0 or 1, got {correct_text!r}")
            if vocabulary is not None:
                if skill not in vocabulary:
                    raise VocabularyError(
                        f"{path} line {line}: unknown skill {skill!r}"
                    )
                skill_id = vocabulary.id_of(skill)
            else:
                skill_id = name_ids.get(skill)
                if skill_id is None:
                    skill_id = len(names)
                    name_ids[skill] = skill_id
                    names.append(skill)
            per_student.setdefault(student, []).append((skill_id, int(correct_text)))

    if vocabulary is None:
        if not names:
            raise SchemaError(f"{path}: no usable data rows")
        vocabulary = SkillVocabulary(names)
    elif not per_student:
        raise SchemaError(f"{path}: no usable data rows")

    sequences = []
    for student, rows in per_student.items():
        items = tuple(
            Interaction(student, skill_id, correct, order)
            for order, (skill_id, correct) in enumerate(rows)
        )
        sequences.append(StudentSequence(student, items))
    return ParsedClickstream(sequences, vocabulary, rejected)


@dataclass
class ParsedProfiles:
    profiles: list[StudentProfile]
    labels: dict[str, int]

    def labeled_students(self) -> list[LabeledStudent]:
        return [
            LabeledStudent(p, self.labels[p.student_id])
            for p in self.profiles
            if p.student_id in self.labels
        ]


def parse_profiles(path) -> ParsedProfiles:
    """Read the per-student profile table.

    Expects a header with `student_id`, the eleven attribute columns, and an
    optional `label` column whose blank entries mark unlabeled students.
    """
    path = Path(path)
    profiles: list[StudentProfile] = []
    labels: dict[str, int] = {}

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        fields = [f.strip() for f in reader.fieldnames]
        missing = [c for c in ("student_id", *PROFILE_COLUMNS) if c not in fields]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {missing}")
        has_label = "label" in fields

        for row in reader:
            line = reader.line_num
            try:
                profile = StudentProfile(
                    student_id=row["student_id"].strip(),
                    usage_year=row["SY ASSISTments Usage"].strip(),
                    num_actions=int(row["NumActions"]),
                    ave_know=float(row["AveKnow"]),
                    ave_correct=float(row["AveCorrect"]),
                    ave_carelessness=float(row["AveCarelessness"]),
                    ave_res_bored=float(row["AveResBored"]),
                    ave_res_engcon=float(row["AveResEngcon"]),
                    ave_res_conf=float(row["AveResConf"]),
                    ave_res_frust=float(row["AveResFrust"]),
                    ave_res_offtask=float(row["AveResOfftask"]),
                    ave_res_gaming=float(row["AveResGaming"]),
                )
            except (TypeError, ValueError) as exc:
                raise RowError(line, str(exc)) from None
            profiles.append(profile)
            if has_label:
                text = (row.get("label") or "").strip()
                if text:
                    if text not in ("0", "1"):
                        raise RowError(line, f"label must be 0 or 1, got {text!r}")
                    labels[profile.student_id] = int(text)
    return ParsedProfiles(profiles, labels)


def deduplicate_labeled(
    students: Sequence[LabeledStudent],
) -> tuple[list[LabeledStudent], int]:
    """Drop repeat entries per student id, keeping the first occurrence.

    Returns the unique list (original order of first appearance) and the
    number of removed entries. Re-entries that disagree with the kept label
    raise LabelConflictError listing every offending id.
    """
    seen: dict[str, int] = {}
    unique: list[LabeledStudent] = []
    conflicts: list[str] = []
    removed = 0
    for student in students:
        prior = seen.get(student.student_id)
        if prior is None:
            seen[student.student_id] = student.label
            unique.append(student)
        else:
            removed += 1
            if prior != student.label and student.student_id not in conflicts:
                conflicts.append(student.student_id)
    if conflicts:
        raise LabelConflictError(sorted(conflicts))
    return unique, removed


def encode_interaction(skill_id: int, correct: int, n_skills: int) -> np.ndarray:
    """One-hot encode a (skill, correctness) pair into a length-2M vector.

    Position `skill_id` is set; position `n_skills + skill_id` is set only
    for a correct answer.
    """
    if n_skills < 1:
        raise ValueError(f"n_skills must be >= 1, got {n_skills}")
    if not 0 <= skill_id < n_skills:
        raise ValueError(
            f"skill_id {skill_id} out of range for vocabulary of {n_skills}"
        )
    if correct not in (0, 1):
        raise ValueError(f"correct must be 0 or 1, got {correct!r}")
    vector = np.zeros(2 * n_skills, dtype=np.float64)
    vector[skill_id] = 1.0
    if correct:
        vector[n_skills + skill_id] = 1.0
    return vector


def decode_interaction(vector: np.ndarray, n_skills: int) -> tuple[int, int]:
    """Invert encode_interaction. Raises ValueError on malformed vectors."""
    vector = np.asarray(vector)
    if vector.shape != (2 * n_skills,):
        raise ValueError(
            f"expected shape ({2 * n_skills},), got {vector.shape}"
        )
    skill_hot = np.flatnonzero(vector[:n_skills])
    if skill_hot.size != 1:
        raise ValueError("vector must set exactly one skill position")
    skill_id = int(skill_hot[0])
    correct_hot = np.flatnonzero(vector[n_skills:])
    if correct_hot.size == 0:
        return skill_id, 0
    if correct_hot.size == 1 and int(correct_hot[0]) == skill_id:
        return skill_id, 1
    raise ValueError("correctness half must be empty or mirror the skill position")
