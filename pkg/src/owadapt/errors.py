"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shape/dimension mismatch or an invalid configuration value."""


class ValidationError(ValueError):
    """Input data violates a documented precondition (simplex, lengths, ranges)."""


class InvalidLabelError(ValueError):
    """A class label outside the set of known classes."""


class InsufficientDataError(ValueError):
    """Not enough samples (or classes) to perform the requested computation."""


class DegenerateInputError(ValueError):
    """Mathematically degenerate input, e.g. a zero vector where a direction is needed."""


class CheckpointError(IOError):
    """Checkpoint file missing, corrupt, or of an unsupported version."""
