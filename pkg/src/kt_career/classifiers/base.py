"""Classifier family specs, construction dispatch, and model files.

A spec is a small frozen dataclass naming exactly the hyperparameters a
family exposes; fitted models serialize to a single JSON document with
a format version, so every saved predictor is self-describing and
byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import ConfigError, SchemaError
from .gbdt import GbdtClassifier
from .lda import SOLVERS as LDA_SOLVERS
from .lda import LdaClassifier
from .logistic import PENALTIES, LogisticClassifier
from .svm import SvmClassifier

FORMAT_VERSION = 1
FAMILIES = ("gbdt", "lda", "lr", "svm")


@dataclass(frozen=True)
class GbdtSpec:
    n_estimators: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(
                f"learning_rate must lie in (0, 1], got {self.learning_rate}"
            )
        if self.min_samples_leaf < 1:
            raise ConfigError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )


@dataclass(frozen=True)
class LdaSpec:
    solver: str = "svd"

    def __post_init__(self):
        if self.solver not in LDA_SOLVERS:
            raise ConfigError(
                f"solver must be one of {LDA_SOLVERS}, got {self.solver!r}"
            )


@dataclass(frozen=True)
class LrSpec:
    c: float = 1.0
    penalty: str = "l2"
    tol: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"C must be positive, got {self.c}")
        if self.penalty not in PENALTIES:
            raise ConfigError(
                f"penalty must be one of {PENALTIES}, got {self.penalty!r}"
            )
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class SvmSpec:
    c: float = 1.0
    gamma: object = "scale"
    tol: float = 1e-3
    calibration_folds: int = 3
    calibration_seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"C must be positive, got {self.c}")
        if self.gamma != "scale":
            try:
                ok = float(self.gamma) > 0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError(
                    f"gamma must be 'scale' or a positive number, got {self.gamma!r}"
                )
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.calibration_folds < 2:
            raise ConfigError(
                f"calibration_folds must be >= 2, got {self.calibration_folds}"
            )


ClassifierSpec = GbdtSpec | LdaSpec | LrSpec | SvmSpec

_FAMILY_OF_TYPE = {
    GbdtSpec: "gbdt",
    LdaSpec: "lda",
    LrSpec: "lr",
    SvmSpec: "svm",
}
_SPEC_OF_FAMILY = {name: cls for cls, name in _FAMILY_OF_TYPE.items()}


def family_of(spec: ClassifierSpec) -> str:
    try:
        return _FAMILY_OF_TYPE[type(spec)]
    except KeyError:
        raise ConfigError(f"unknown classifier spec type {type(spec).__name__}") from None


def needs_standardized_features(spec: ClassifierSpec) -> bool:
    """Trees split on raw thresholds; the other families want scaling."""
    return not isinstance(spec, GbdtSpec)


def make_classifier(spec: ClassifierSpec):
    if isinstance(spec, GbdtSpec):
        return GbdtClassifier(
            n_estimators=spec.n_estimators,
            max_depth=spec.max_depth,
            learning_rate=spec.learning_rate,
            min_samples_leaf=spec.min_samples_leaf,
        )
    if isinstance(spec, LdaSpec):
        return LdaClassifier(solver=spec.solver)
    if isinstance(spec, LrSpec):
        return LogisticClassifier(
            c=spec.c, penalty=spec.penalty, tol=spec.tol, max_iter=spec.max_iter
        )
    if isinstance(spec, SvmSpec):
        return SvmClassifier(
            c=spec.c,
            gamma=spec.gamma,
            tol=spec.tol,
            calibration_folds=spec.calibration_folds,
            calibration_seed=spec.calibration_seed,
        )
    raise ConfigError(f"unknown classifier spec type {type(spec).__name__}")


def fit_classifier(spec: ClassifierSpec, x, y):
    return make_classifier(spec).fit(x, y)


def spec_from_dict(family: str, payload: dict) -> ClassifierSpec:
    if family not in _SPEC_OF_FAMILY:
        raise ConfigError(f"unknown classifier family {family!r}")
    cls = _SPEC_OF_FAMILY[family]
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad {family} spec fields: {exc}") from exc


def save_classifier(path, spec: ClassifierSpec, model, feature_names=None) -> None:
    document = {
        "format_version": FORMAT_VERSION,
        "family": family_of(spec),
        "spec": asdict(spec),
        "feature_names": list(feature_names) if feature_names else None,
        "model": model.payload(),
    }
    text = json.dumps(document, sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_classifier(path):
    """Returns (spec, model, feature_names)."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable classifier file: {exc}") from exc
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(
            f"{path}: classifier format version {version!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    family = document.get("family")
    spec = spec_from_dict(family, document.get("spec", {}))
    model = make_classifier(spec)
    try:
        model.load_payload(document["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: bad model payload: {exc}") from exc
    return spec, model, document.get("feature_names")
