"""Exception types shared across the toolkit.

Everything subclasses both :class:`ToolkitError` and :class:`ValueError`,
so callers can catch broadly or narrowly as they prefer.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ToolkitError, ValueError):
    """Inputs have incompatible or invalid dimensions."""


class DomainError(ToolkitError, ValueError):
    """A value lies outside the domain an operation accepts.

    Covers both image intensity-domain mismatches (Hounsfield vs.
    normalized pixels) and scalar arguments outside their legal range.
    """


class DegenerateInputError(ToolkitError, ValueError):
    """Input carries no usable signal (constant, one-sided, non-PSD, ...)."""


class InsufficientDataError(ToolkitError, ValueError):
    """Too few samples, rows, or points to perform the computation."""


class FileFormatError(ToolkitError, ValueError):
    """A file does not conform to its documented format."""
