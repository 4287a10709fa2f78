"""Exception hierarchy for the exporter.

Everything raised on purpose derives from :class:`ExporterError`, so
callers (and the command-line entry point) can catch one type and
report the message.
"""


class ExporterError(Exception):
    """Base class for every error this package raises deliberately."""


class ManifestError(ExporterError):
    """The corpus manifest is malformed or inconsistent."""


class RasterError(ExporterError):
    """An image file cannot be read or holds unusable values."""


class WeightsError(ExporterError):
    """Network weights are missing, malformed, or not loadable."""


class JobError(ExporterError):
    """An export job is configured inconsistently."""


class InferenceError(ExporterError):
    """A network forward pass failed for a specific input."""
