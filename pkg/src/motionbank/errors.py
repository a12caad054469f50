"""Exception types shared across the package."""


class MotionBankError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(MotionBankError):
    """Raised for malformed inputs: bad shapes, bad config values, bad files."""


class CheckpointError(MotionBankError):
    """Raised when a checkpoint file cannot be loaded or fails validation."""


class NumericsError(MotionBankError):
    """Raised when a computation produces values outside its valid domain."""
