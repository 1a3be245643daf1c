"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or file schema."""


class MetricUndefinedError(ValidationError):
    """Raised when a metric has no defined value (e.g. no positive labels)."""


class CheckpointError(ValidationError):
    """Raised for unreadable, version-mismatched, or inconsistent checkpoints."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""
