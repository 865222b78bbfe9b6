"""Exception hierarchy shared by every module."""


class QuartzError(Exception):
    """Base class for all package errors."""


class ValidationError(QuartzError, ValueError):
    """An argument violates a documented precondition."""


class DimensionError(ValidationError):
    """Shapes or lengths do not agree."""


class FormatError(QuartzError):
    """A QTNSR/QPACK byte stream is malformed."""
