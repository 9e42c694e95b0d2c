"""Exception types shared across the package.

Grouped so the command line tool can map failures to exit codes in one
place: input/validation problems, numerical failures, and missing
upstream artifacts.
"""


class KtCareerError(Exception):
    """Base class for every package-specific error."""


class ConfigError(KtCareerError, ValueError):
    """A configuration value or file is missing, malformed, or out of range."""


class SchemaError(KtCareerError, ValueError):
    """A file or matrix does not have the expected columns."""


class RowError(KtCareerError, ValueError):
    """A single data row holds an invalid value."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class VocabularyError(KtCareerError, ValueError):
    """A skill name is unknown to the fixed vocabulary, or names collide."""


class LabelConflictError(KtCareerError, ValueError):
    """The same student appears with conflicting labels."""

    def __init__(self, student_ids):
        self.student_ids = tuple(student_ids)
        ids = ", ".join(self.student_ids)
        super().__init__(f"conflicting labels for student(s): {ids}")


class FeatureValidationError(KtCareerError, ValueError):
    """A feature value is missing or outside its valid range."""


class ShapeError(KtCareerError, ValueError):
    """An array argument has the wrong dimensionality or size."""


class UndefinedLossError(KtCareerError, ValueError):
    """A loss term has no contributing prediction targets."""


class TrainingDivergedError(KtCareerError, RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        detail = f" ({message})" if message else ""
        super().__init__(f"training diverged at epoch {epoch}{detail}")


class DegenerateLabelsError(KtCareerError, ValueError):
    """A binary-label operation received labels from a single class."""


class UndefinedMetricError(KtCareerError, ValueError):
    """A metric is undefined for the given label distribution."""


class DegenerateVarianceError(KtCareerError, ValueError):
    """A variance estimate is zero where a nonzero one is required."""


class UndefinedNlgError(KtCareerError, ValueError):
    """Normalized learning gain is undefined (pre-score at ceiling)."""


class UnsupportedFamilyError(KtCareerError, ValueError):
    """An operation was asked of a classifier family that cannot provide it."""


class DependencyError(KtCareerError):
    """An upstream artifact is missing; names the command that produces it."""

    def __init__(self, artifact: str, producing_command: str):
        self.artifact = artifact
        self.producing_command = producing_command
        super().__init__(
            f"missing artifact {artifact!r}; "
            f"run `kt-career {producing_command}` first"
        )
