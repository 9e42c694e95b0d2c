"""Run configuration: a flat dotted key=value text format.

One file drives the whole pipeline. Keys are dotted paths like
`cohort.n_students` or `eval.grid.lr.c`; values are plain text parsed
by the key's declared type. Anything unrecognized is an error, the
seed is mandatory, and the sha256 of the effective key/value map (after
command-line overrides) stamps every artifact manifest so stale
mixtures of outputs are detectable.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import FAMILIES, ClassifierSpec, spec_from_dict
from .dkt import TrainConfig
from .errors import ConfigError
from .synthetic import CohortConfig

FEATURE_SETS = ("sp", "kt_dkt", "kt_dktplus", "kt_sp_dkt", "kt_sp_dktplus")
KT_VARIANTS = ("both", "dkt", "dktplus")

_KEY_PATTERN = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)*$")

# Grid axes per family, in cartesian-product order (first axis outermost);
# this fixes the tie-breaking order of generated grids.
_GRID_AXES = {
    "gbdt": (
        ("n_estimators", "int"),
        ("max_depth", "int"),
        ("min_samples_leaf", "int"),
        ("learning_rate", "float"),
    ),
    "lda": (("solver", "str"),),
    "lr": (("c", "float"), ("penalty", "str")),
    "svm": (("c", "float"), ("gamma", "gamma")),
}

_PREDICTOR_PARAMS = {
    "gbdt": {
        "n_estimators": "int",
        "max_depth": "int",
        "min_samples_leaf": "int",
        "learning_rate": "float",
    },
    "lda": {"solver": "str"},
    "lr": {"c": "float", "penalty": "str", "tol": "float", "max_iter": "int"},
    "svm": {
        "c": "float",
        "gamma": "gamma",
        "tol": "float",
        "calibration_folds": "int",
    },
}

_FIXED_KEYS = {
    "seed",
    "out",
    "data.clickstream",
    "data.profiles",
    "data.vocabulary",
    "cohort.n_students",
    "cohort.n_skills",
    "cohort.min_length",
    "cohort.max_length",
    "cohort.stem_fraction",
    "cohort.ability_gap",
    "cohort.gap_skills",
    "cohort.p_init",
    "cohort.p_learn",
    "cohort.p_guess",
    "cohort.p_slip",
    "cohort.skill_spread",
    "cohort.student_sd",
    "cohort.affect_noise",
    "cohort.nlg_window",
    "kt.variant",
    "kt.hidden_size",
    "kt.learning_rate",
    "kt.dropout",
    "kt.clip_norm",
    "kt.lambda_r",
    "kt.lambda_w1",
    "kt.lambda_w2",
    "kt.batch_size",
    "kt.max_epochs",
    "kt.patience",
    "kt.init_std",
    "kt.optimizer",
    "kt.val_fraction",
    "kt.max_segment_len",
    "eval.folds",
    "eval.families",
    "eval.nested",
    "rfe.enabled",
    "rfe.sizes",
    "predictor.family",
    "predictor.feature_set",
    "analysis.nlg_window",
    "analysis.nlg_variant",
    "analysis.bins",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment line."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_PATTERN.match(key):
            raise ConfigError(f"line {lineno}: malformed key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value, 10)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key}: value must be finite, got {value!r}")
    return out


def _parse_bool(key: str, value: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ConfigError(f"{key}: expected true or false, got {value!r}")


def _parse_choice(key: str, value: str, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{key}: expected one of {choices}, got {value!r}")
    return value


def _parse_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_typed(key: str, value: str, kind: str):
    if kind == "int":
        return _parse_int(key, value)
    if kind == "float":
        return _parse_float(key, value)
    if kind == "gamma":
        return "scale" if value == "scale" else _parse_float(key, value)
    return value


@dataclass
class RunConfig:
    """Everything a pipeline command needs, plus the raw map it hashes."""

    seed: int
    out: Path
    clickstream: Path | None
    profiles: Path | None
    vocabulary: Path | None
    cohort: CohortConfig
    kt_variant: str
    kt_train: TrainConfig
    eval_folds: int
    eval_families: tuple[str, ...]
    eval_nested: bool
    eval_grids: dict[str, list[ClassifierSpec]]
    rfe_enabled: bool
    rfe_sizes: tuple
    predictor_family: str
    predictor_feature_set: str
    predictor_specs: dict[str, ClassifierSpec]
    analysis_nlg_window: int
    analysis_nlg_variant: str
    analysis_bins: int
    raw: dict[str, str] = field(default_factory=dict)

    def config_hash(self) -> str:
        canonical = "\n".join(
            f"{key}={self.raw[key]}" for key in sorted(self.raw)
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def path_clickstream(self) -> Path:
        return self.clickstream or self.out / "clickstream.csv"

    def path_profiles(self) -> Path:
        return self.profiles or self.out / "profiles.csv"

    def path_vocabulary(self) -> Path:
        return self.vocabulary or self.out / "vocabulary.txt"

    def kt_variants(self) -> list[str]:
        if self.kt_variant == "both":
            return ["dkt", "dktplus"]
        return [self.kt_variant]


def _known_key(key: str) -> bool:
    if key in _FIXED_KEYS:
        return True
    parts = key.split(".")
    if len(parts) == 4 and parts[0] == "eval" and parts[1] == "grid":
        _, _, family, param = parts
        return family in _GRID_AXES and param in dict(_GRID_AXES[family])
    if len(parts) == 3 and parts[0] == "predictor":
        _, family, param = parts
        return family in _PREDICTOR_PARAMS and param in _PREDICTOR_PARAMS[family]
    return False


def _build_cohort(get, seed: int) -> CohortConfig:
    gap_raw = get.raw.get("cohort.gap_skills")
    gap_skills = None
    if gap_raw is not None:
        gap_skills = tuple(
            _parse_int("cohort.gap_skills", item) for item in _parse_list(gap_raw)
        )
        if not gap_skills:
            raise ConfigError("cohort.gap_skills: empty list")
    return CohortConfig(
        n_students=get.int("cohort.n_students", 300),
        n_skills=get.int("cohort.n_skills", 10),
        min_length=get.int("cohort.min_length", 50),
        max_length=get.int("cohort.max_length", 150),
        stem_fraction=get.float("cohort.stem_fraction", 0.25),
        ability_gap=get.float("cohort.ability_gap", 0.0),
        gap_skills=gap_skills,
        seed=seed,
        p_init=get.float("cohort.p_init", 0.3),
        p_learn=get.float("cohort.p_learn", 0.12),
        p_guess=get.float("cohort.p_guess", 0.1),
        p_slip=get.float("cohort.p_slip", 0.1),
        skill_spread=get.float("cohort.skill_spread", 0.05),
        student_sd=get.float("cohort.student_sd", 0.05),
        affect_noise=get.float("cohort.affect_noise", 0.15),
        nlg_window=get.int("cohort.nlg_window", 10),
    )


def _build_kt(get, seed: int) -> TrainConfig:
    return TrainConfig(
        hidden_size=get.int("kt.hidden_size", 200),
        learning_rate=get.float("kt.learning_rate", 0.01),
        dropout=get.float("kt.dropout", 0.5),
        clip_norm=get.float("kt.clip_norm", 3.0),
        lambda_r=get.float("kt.lambda_r", 0.0),
        lambda_w1=get.float("kt.lambda_w1", 0.0),
        lambda_w2=get.float("kt.lambda_w2", 0.0),
        batch_size=get.int("kt.batch_size", 32),
        max_epochs=get.int("kt.max_epochs", 100),
        patience=get.int("kt.patience", 5),
        init_std=get.float("kt.init_std", 0.05),
        optimizer=get.choice("kt.optimizer", "sgd", ("sgd", "adam")),
        val_fraction=get.float("kt.val_fraction", 0.2),
        max_segment_len=get.int("kt.max_segment_len", 200),
        seed=seed,
    )


def _build_grids(raw: dict[str, str]) -> dict[str, list[ClassifierSpec]]:
    grids: dict[str, list[ClassifierSpec]] = {}
    for family, axes in _GRID_AXES.items():
        prefix = f"eval.grid.{family}."
        touched = [k for k in raw if k.startswith(prefix)]
        if not touched:
            continue
        axis_values = []
        axis_names = []
        for param, kind in axes:
            key = prefix + param
            if key not in raw:
                continue
            items = _parse_list(raw[key])
            if not items:
                raise ConfigError(f"{key}: empty list")
            axis_names.append(param)
            axis_values.append(
                [_parse_typed(key, item, kind) for item in items]
            )
        grids[family] = [
            spec_from_dict(family, dict(zip(axis_names, combo)))
            for combo in itertools.product(*axis_values)
        ]
    return grids


def _build_predictor_specs(raw: dict[str, str]) -> dict[str, ClassifierSpec]:
    specs = {}
    for family, params in _PREDICTOR_PARAMS.items():
        payload = {}
        for param, kind in params.items():
            key = f"predictor.{family}.{param}"
            if key in raw:
                payload[param] = _parse_typed(key, raw[key], kind)
        specs[family] = spec_from_dict(family, payload)
    return specs


def _parse_rfe_sizes(raw_value: str) -> tuple:
    sizes = []
    for item in _parse_list(raw_value):
        if item == "all":
            sizes.append("all")
        else:
            value = _parse_int("rfe.sizes", item)
            if value < 1:
                raise ConfigError(f"rfe.sizes: sizes must be >= 1, got {value}")
            sizes.append(value)
    if not sizes:
        raise ConfigError("rfe.sizes: empty list")
    return tuple(sizes)


class _Getter:
    """Typed access to the raw map with defaults."""

    def __init__(self, raw: dict[str, str]):
        self.raw = raw

    def int(self, key: str, default: int) -> int:
        return _parse_int(key, self.raw[key]) if key in self.raw else default

    def float(self, key: str, default: float) -> float:
        return _parse_float(key, self.raw[key]) if key in self.raw else default

    def bool(self, key: str, default: bool) -> bool:
        return _parse_bool(key, self.raw[key]) if key in self.raw else default

    def choice(self, key: str, default: str, choices) -> str:
        if key not in self.raw:
            return default
        return _parse_choice(key, self.raw[key], choices)


def run_config_from_map(
    raw: dict[str, str],
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    raw = dict(raw)
    if seed_override is not None:
        raw["seed"] = str(int(seed_override))
    if out_override is not None:
        raw["out"] = out_override

    unknown = sorted(k for k in raw if not _known_key(k))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "seed" not in raw:
        raise ConfigError("seed is mandatory: set `seed = N` or pass --seed")

    get = _Getter(raw)
    seed = _parse_int("seed", raw["seed"])
    out = Path(raw.get("out", "kt_career_run"))

    families_raw = raw.get("eval.families")
    if families_raw is None:
        families = tuple(FAMILIES)
    else:
        families = tuple(_parse_list(families_raw))
        if not families:
            raise ConfigError("eval.families: empty list")
        bad = [f for f in families if f not in FAMILIES]
        if bad:
            raise ConfigError(
                f"eval.families: unknown families {bad}, expected {FAMILIES}"
            )
        if len(set(families)) != len(families):
            raise ConfigError("eval.families: repeated family")

    eval_folds = get.int("eval.folds", 5)
    if eval_folds < 2:
        raise ConfigError(f"eval.folds must be >= 2, got {eval_folds}")
    bins = get.int("analysis.bins", 30)
    if bins < 1:
        raise ConfigError(f"analysis.bins must be >= 1, got {bins}")
    nlg_window = get.int("analysis.nlg_window", 10)
    if nlg_window < 1:
        raise ConfigError(f"analysis.nlg_window must be >= 1, got {nlg_window}")

    rfe_sizes_raw = raw.get("rfe.sizes")
    rfe_sizes = (
        (5, 8, 10, 12, 15, 20, "all")
        if rfe_sizes_raw is None
        else _parse_rfe_sizes(rfe_sizes_raw)
    )

    def _path_or_none(key: str) -> Path | None:
        return Path(raw[key]) if key in raw else None

    return RunConfig(
        seed=seed,
        out=out,
        clickstream=_path_or_none("data.clickstream"),
        profiles=_path_or_none("data.profiles"),
        vocabulary=_path_or_none("data.vocabulary"),
        cohort=_build_cohort(get, seed),
        kt_variant=get.choice("kt.variant", "both", KT_VARIANTS),
        kt_train=_build_kt(get, seed),
        eval_folds=eval_folds,
        eval_families=families,
        eval_nested=get.bool("eval.nested", False),
        eval_grids=_build_grids(raw),
        rfe_enabled=get.bool("rfe.enabled", False),
        rfe_sizes=rfe_sizes,
        predictor_family=get.choice("predictor.family", "gbdt", FAMILIES),
        predictor_feature_set=get.choice(
            "predictor.feature_set", "sp", FEATURE_SETS
        ),
        predictor_specs=_build_predictor_specs(raw),
        analysis_nlg_window=nlg_window,
        analysis_nlg_variant=get.choice(
            "analysis.nlg_variant", "dktplus", ("dkt", "dktplus")
        ),
        analysis_bins=bins,
        raw=raw,
    )


def load_run_config(
    path,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return run_config_from_map(
        parse_config_text(text),
        seed_override=seed_override,
        out_override=out_override,
    )
