"""Exception hierarchy shared across the package."""


class OmiVaeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OmiVaeError):
    """Bad input: shapes, configs, labels, file contents."""


class FormatError(ValidationError):
    """Malformed or corrupt serialized container (checkpoint, dataset cache)."""


class NumericError(OmiVaeError):
    """Non-finite values where finite ones are required (diverged loss, bad gradients)."""
