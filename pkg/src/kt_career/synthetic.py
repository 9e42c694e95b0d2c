"""Synthetic cohort generation from a Bayesian knowledge tracing process.

Each student holds a latent binary mastery process per skill. Answers are
sampled from the filtered mastery belief (emission probability
p * (1 - slip) + (1 - p) * guess), after which the belief is updated by
Bayes rule and the learning transition. Sampling from the filtered belief
is equivalent to marginalizing the latent state, so `bkt_filter_update` is
both the generator's engine and the reference posterior.

A planted ability gap shifts p_init and p_learn upward for STEM-labeled
students, optionally on a subset of skills only, which leaves per-skill
knowledge states carrying signal that scalar profile summaries dilute.
Everything derives deterministically from the seed, and every latent
variable is recorded in a ground-truth table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import nlg_from_step_means
from .data_model import (
    PROFILE_COLUMNS,
    LabeledStudent,
    SkillVocabulary,
    StudentProfile,
    StudentSequence,
)
from .errors import ConfigError

_PARAM_LO = 0.02
_PARAM_HI = 0.98


@dataclass(frozen=True)
class SkillModel:
    """BKT parameters of one skill."""

    p_init: float
    p_learn: float
    p_guess: float
    p_slip: float

    def __post_init__(self):
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.p_guess + self.p_slip >= 1.0:
            raise ValueError(
                f"p_guess + p_slip must stay below 1, got "
                f"{self.p_guess} + {self.p_slip}"
            )


def _filter_update(p_mastered, correct, p_guess, p_slip, p_learn):
    """Vectorized posterior-then-transition update of the mastery belief."""
    p = np.asarray(p_mastered, dtype=np.float64)
    hit = np.asarray(correct, dtype=bool)
    like_hit = p * (1.0 - p_slip)
    like_miss = p * p_slip
    posterior = np.where(
        hit,
        like_hit / (like_hit + (1.0 - p) * p_guess),
        like_miss / (like_miss + (1.0 - p) * (1.0 - p_guess)),
    )
    return posterior + (1.0 - posterior) * p_learn


def bkt_filter_update(p_mastered: float, correct: int, skill: SkillModel) -> float:
    """One filtering step of the mastery belief given an observed answer."""
    if not 0.0 <= p_mastered <= 1.0:
        raise ValueError(f"p_mastered must lie in [0, 1], got {p_mastered}")
    if correct not in (0, 1):
        raise ValueError(f"correct must be 0 or 1, got {correct!r}")
    return float(
        _filter_update(p_mastered, bool(correct), skill.p_guess, skill.p_slip, skill.p_learn)
    )


@dataclass(frozen=True)
class CohortConfig:
    """Knobs of the synthetic cohort.

    `stem_fraction` fixes the exact STEM count at round(n * fraction).
    `ability_gap` is the additive shift applied to p_init and p_learn of
    STEM students on the skills in `gap_skills` (None means every skill).
    `skill_spread` jitters the per-skill base p_init / p_learn; guess and
    slip stay at their configured values exactly.
    """

    n_students: int
    n_skills: int
    min_length: int
    max_length: int
    stem_fraction: float
    ability_gap: float = 0.0
    gap_skills: tuple[int, ...] | None = None
    seed: int = 0
    p_init: float = 0.3
    p_learn: float = 0.12
    p_guess: float = 0.1
    p_slip: float = 0.1
    skill_spread: float = 0.05
    student_sd: float = 0.05
    affect_noise: float = 0.15
    nlg_window: int = 10

    def __post_init__(self):
        if self.n_students < 1:
            raise ConfigError(f"n_students must be >= 1, got {self.n_students}")
        if self.n_skills < 1:
            raise ConfigError(f"n_skills must be >= 1, got {self.n_skills}")
        if not 1 <= self.min_length <= self.max_length:
            raise ConfigError(
                f"need 1 <= min_length <= max_length, got "
                f"{self.min_length}..{self.max_length}"
            )
        if not 0.0 < self.stem_fraction < 1.0:
            raise ConfigError(
                f"stem_fraction must lie in (0, 1), got {self.stem_fraction}"
            )
        if self.ability_gap < 0.0:
            raise ConfigError(f"ability_gap must be >= 0, got {self.ability_gap}")
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if self.p_guess + self.p_slip >= 1.0:
            raise ConfigError("p_guess + p_slip must stay below 1")
        for name in ("skill_spread", "student_sd", "affect_noise"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0")
        if self.gap_skills is not None:
            bad = [k for k in self.gap_skills if not 0 <= k < self.n_skills]
            if bad:
                raise ConfigError(f"gap_skills out of range: {bad}")
            if len(set(self.gap_skills)) != len(self.gap_skills):
                raise ConfigError("gap_skills holds repeated indices")
        if self.nlg_window < 1:
            raise ConfigError(f"nlg_window must be >= 1, got {self.nlg_window}")

    @property
    def n_stem(self) -> int:
        return int(round(self.n_students * self.stem_fraction))


@dataclass
class Cohort:
    """Generated cohort with its full latent ground truth.

    `skills` and `corrects` are (n_students, max_length) arrays padded with
    -1 / 0 past each student's length. `final_mastery`, `p_init_eff`, and
    `p_learn_eff` are (n_students, n_skills); `step_mean_mastery` is the
    per-step mean belief across all skills, NaN-padded.
    """

    config: CohortConfig
    skill_names: tuple[str, ...]
    student_ids: list[str]
    labels: np.ndarray
    lengths: np.ndarray
    skills: np.ndarray
    corrects: np.ndarray
    ability: np.ndarray
    p_init_eff: np.ndarray
    p_learn_eff: np.ndarray
    final_mastery: np.ndarray
    answered: np.ndarray
    step_mean_mastery: np.ndarray
    true_nlg: np.ndarray
    profiles: list[StudentProfile] = field(default_factory=list)

    @property
    def total_interactions(self) -> int:
        return int(self.lengths.sum())

    def vocabulary(self) -> SkillVocabulary:
        return SkillVocabulary(self.skill_names)

    def sequences(self) -> list[StudentSequence]:
        out = []
        for i, sid in enumerate(self.student_ids):
            t = int(self.lengths[i])
            out.append(
                StudentSequence.from_arrays(
                    sid, self.skills[i, :t], self.corrects[i, :t]
                )
            )
        return out

    def labeled_students(self) -> list[LabeledStudent]:
        return [
            LabeledStudent(profile, int(self.labels[i]))
            for i, profile in enumerate(self.profiles)
        ]


def generate_cohort(config: CohortConfig) -> Cohort:
    """Sample a full cohort deterministically from the config seed."""
    rng = np.random.default_rng(config.seed)
    n, m = config.n_students, config.n_skills
    max_t = config.max_length

    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[: config.n_stem]] = 1

    jitter = rng.uniform(-config.skill_spread, config.skill_spread, size=(2, m))
    base_init = np.clip(config.p_init + jitter[0], _PARAM_LO, _PARAM_HI)
    base_learn = np.clip(config.p_learn + jitter[1], _PARAM_LO, _PARAM_HI)

    ability = rng.normal(0.0, config.student_sd, size=n)
    lengths = rng.integers(config.min_length, config.max_length + 1, size=n)

    affect = np.clip(
        rng.normal(0.25, config.affect_noise, size=(n, 7)), 0.0, 1.0
    )

    gap_mask = np.zeros(m, dtype=np.float64)
    if config.gap_skills is None:
        gap_mask[:] = 1.0
    else:
        gap_mask[list(config.gap_skills)] = 1.0
    shift = ability[:, None] + config.ability_gap * labels[:, None] * gap_mask[None, :]
    p_init_eff = np.clip(base_init[None, :] + shift, _PARAM_LO, _PARAM_HI)
    p_learn_eff = np.clip(base_learn[None, :] + shift, _PARAM_LO, _PARAM_HI)

    beliefs = p_init_eff.copy()
    answered = np.zeros((n, m), dtype=bool)
    skills = np.full((n, max_t), -1, dtype=np.int64)
    corrects = np.zeros((n, max_t), dtype=np.int64)
    step_mean = np.full((n, max_t), np.nan)
    rows = np.arange(n)

    for t in range(max_t):
        step_skill = rng.integers(0, m, size=n)
        draw = rng.random(n)
        active = lengths > t
        chosen = beliefs[rows, step_skill]
        p_correct = chosen * (1.0 - config.p_slip) + (1.0 - chosen) * config.p_guess
        hit = draw < p_correct
        updated = _filter_update(
            chosen, hit, config.p_guess, config.p_slip, p_learn_eff[rows, step_skill]
        )
        beliefs[rows[active], step_skill[active]] = updated[active]
        answered[rows[active], step_skill[active]] = True
        skills[active, t] = step_skill[active]
        corrects[active, t] = hit[active].astype(np.int64)
        step_mean[active, t] = beliefs[active].mean(axis=1)

    true_nlg = np.array(
        [
            nlg_from_step_means(step_mean[i, : lengths[i]], window=config.nlg_window)
            for i in range(n)
        ]
    )

    skill_names = tuple(f"skill_{k:03d}" for k in range(m))
    student_ids = [f"stu{i:05d}" for i in range(n)]
    profiles = []
    for i in range(n):
        t = int(lengths[i])
        ave_correct = float(corrects[i, :t].mean())
        ave_know = float(beliefs[i][answered[i]].mean())
        profiles.append(
            StudentProfile(
                student_id=student_ids[i],
                usage_year="synthetic",
                num_actions=t,
                ave_know=ave_know,
                ave_correct=ave_correct,
                ave_carelessness=float(affect[i, 0]),
                ave_res_bored=float(affect[i, 1]),
                ave_res_engcon=float(affect[i, 2]),
                ave_res_conf=float(affect[i, 3]),
                ave_res_frust=float(affect[i, 4]),
                ave_res_offtask=float(affect[i, 5]),
                ave_res_gaming=float(affect[i, 6]),
            )
        )

    return Cohort(
        config=config,
        skill_names=skill_names,
        student_ids=student_ids,
        labels=labels,
        lengths=lengths,
        skills=skills,
        corrects=corrects,
        ability=ability,
        p_init_eff=p_init_eff,
        p_learn_eff=p_learn_eff,
        final_mastery=beliefs,
        answered=answered,
        step_mean_mastery=step_mean,
        true_nlg=true_nlg,
        profiles=profiles,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_cohort(cohort: Cohort, out_dir) -> dict[str, Path]:
    """Write clickstream, profiles, vocabulary, and ground truth files.

    Output bytes are a pure function of the cohort, so rerunning with the
    same config and seed reproduces them exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "clickstream": out / "clickstream.csv",
        "profiles": out / "profiles.csv",
        "vocabulary": out / "vocabulary.txt",
        "ground_truth": out / "ground_truth.csv",
    }

    with open(paths["clickstream"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["student_id", "skill", "correct"])
        for i, sid in enumerate(cohort.student_ids):
            t = int(cohort.lengths[i])
            for step in range(t):
                writer.writerow(
                    [
                        sid,
                        cohort.skill_names[cohort.skills[i, step]],
                        int(cohort.corrects[i, step]),
                    ]
                )

    with open(paths["profiles"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["student_id", *PROFILE_COLUMNS, "label"])
        for i, profile in enumerate(cohort.profiles):
            writer.writerow(
                [
                    profile.student_id,
                    profile.usage_year,
                    profile.num_actions,
                    _fmt(profile.ave_know),
                    _fmt(profile.ave_correct),
                    _fmt(profile.ave_carelessness),
                    _fmt(profile.ave_res_bored),
                    _fmt(profile.ave_res_engcon),
                    _fmt(profile.ave_res_conf),
                    _fmt(profile.ave_res_frust),
                    _fmt(profile.ave_res_offtask),
                    _fmt(profile.ave_res_gaming),
                    int(cohort.labels[i]),
                ]
            )

    cohort.vocabulary().save(paths["vocabulary"])

    with open(paths["ground_truth"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["student_id", "label", "ability", "true_nlg"]
        for name in cohort.skill_names:
            header.append(f"p_init_eff_{name}")
        for name in cohort.skill_names:
            header.append(f"p_learn_eff_{name}")
        for name in cohort.skill_names:
            header.append(f"final_mastery_{name}")
        writer.writerow(header)
        for i, sid in enumerate(cohort.student_ids):
            row = [
                sid,
                int(cohort.labels[i]),
                _fmt(cohort.ability[i]),
                _fmt(cohort.true_nlg[i]),
            ]
            row.extend(_fmt(v) for v in cohort.p_init_eff[i])
            row.extend(_fmt(v) for v in cohort.p_learn_eff[i])
            row.extend(_fmt(v) for v in cohort.final_mastery[i])
            writer.writerow(row)

    return paths
