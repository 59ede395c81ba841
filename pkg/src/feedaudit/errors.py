"""Exception types shared across the toolkit."""


class FeedAuditError(Exception):
    """Base class for all toolkit errors."""


class SnapshotParseError(FeedAuditError, ValueError):
    """Malformed JSON in a snapshot or comment line.

    Carries the byte offset of the failure within the line when known.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class SchemaValidationError(FeedAuditError, ValueError):
    """Structurally valid JSON that violates the record contract."""


class LabelingError(FeedAuditError, ValueError):
    """Comment record carries neither toxicity scores nor a removal flag."""


class SamplingError(FeedAuditError, ValueError):
    """Requested sample exceeds the available population."""


class DomainError(FeedAuditError, ValueError):
    """Argument outside an operation's mathematical domain."""


class ConfigError(FeedAuditError, ValueError):
    """Missing or inconsistent configuration."""


class DegenerateDataError(FeedAuditError, ValueError):
    """Data cannot support the requested fit (no variation, all zeros, ...)."""


class SeparationError(FeedAuditError, RuntimeError):
    """Perfect separation detected during a GLM fit."""

    def __init__(self, column: str, coefficient: float):
        super().__init__(
            f"perfect separation suspected: |coefficient| for column "
            f"{column!r} exceeded bound ({coefficient:.3g})"
        )
        self.column = column
        self.coefficient = coefficient


class SingularInformationError(FeedAuditError, RuntimeError):
    """Observed information matrix is singular (collinear design)."""


class FitConvergenceError(FeedAuditError, RuntimeError):
    """Iterative fit failed to converge within its iteration budget."""


class InsufficientStrataError(FeedAuditError, ValueError):
    """Fewer retained strata than the pooled-effect model requires."""


class EmptyArmError(FeedAuditError, ValueError):
    """A stratum is missing treated or control samples."""

    def __init__(self, stratum: int | str, arm: str):
        super().__init__(f"stratum {stratum} has no {arm} samples")
        self.stratum = stratum
        self.arm = arm


class PipelineStageError(FeedAuditError, RuntimeError):
    """A pipeline stage failed; names the stage and chains the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
