"""Exception types raised across the pipeline."""


class DNRiskError(Exception):
    """Base class for all library errors."""


class SchemaError(DNRiskError):
    """Header/schema mismatch or malformed schema file."""


class UnknownCategory(DNRiskError):
    pass


class MissingTarget(DNRiskError):
    pass


class EmptyFeatureSet(DNRiskError):
    pass


class EmptyCohort(DNRiskError):
    pass


class DomainError(DNRiskError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConstantFeature(DNRiskError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__(f"zero-variance feature(s): {', '.join(self.names)}")


class InsufficientData(DNRiskError):
    pass


class StratificationError(DNRiskError):
    pass


class ShapeError(DNRiskError, ValueError):
    pass


class DegenerateLabels(DNRiskError):
    """Only one class present where both are required."""


class BinningError(DNRiskError):
    pass


class InvalidModel(DNRiskError):
    pass


class ComplexityGuard(DNRiskError):
    pass


class SpecError(DNRiskError):
    pass


class UnknownFeature(DNRiskError, KeyError, NameError):
    """A feature name not present in the data or attribution matrix."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown feature"


class NonNumericCell(SchemaError):
    pass


class MissingArtifact(DNRiskError, FileNotFoundError):
    """A report file needed for a figure is absent."""


class StageError(DNRiskError):
    """Wraps a failure inside one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
