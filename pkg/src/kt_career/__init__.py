"""Knowledge-tracing based STEM/non-STEM career prediction pipeline."""

__version__ = "0.1.0"

from . import (
    analysis,
    classifiers,
    config,
    data_model,
    dkt,
    errors,
    evaluation,
    features,
    folds,
    metrics,
    synthetic,
)

__all__ = [
    "__version__",
    "analysis",
    "classifiers",
    "config",
    "data_model",
    "dkt",
    "errors",
    "evaluation",
    "features",
    "folds",
    "metrics",
    "synthetic",
]
