"""Binary career-label classifiers trained on assembled features."""

from .base import (
    FAMILIES,
    ClassifierSpec,
    GbdtSpec,
    LdaSpec,
    LrSpec,
    SvmSpec,
    family_of,
    fit_classifier,
    load_classifier,
    make_classifier,
    needs_standardized_features,
    save_classifier,
    spec_from_dict,
)
from .gbdt import GbdtClassifier
from .lda import LdaClassifier
from .logistic import LogisticClassifier
from .svm import SvmClassifier

__all__ = [
    "FAMILIES",
    "ClassifierSpec",
    "GbdtClassifier",
    "GbdtSpec",
    "LdaClassifier",
    "LdaSpec",
    "LogisticClassifier",
    "LrSpec",
    "SvmClassifier",
    "SvmSpec",
    "family_of",
    "fit_classifier",
    "load_classifier",
    "make_classifier",
    "needs_standardized_features",
    "save_classifier",
    "spec_from_dict",
]
