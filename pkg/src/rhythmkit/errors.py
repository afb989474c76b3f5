"""Exception types raised across the pipeline."""


class RhythmKitError(ValueError):
    """Base class for pipeline errors."""


class IngestError(RhythmKitError):
    """Malformed or inconsistent input files."""


class GeometryError(RhythmKitError):
    """Degenerate landmarks or face boxes that cannot be sampled."""


class NoPeakError(RhythmKitError):
    """Raised when a pulse signal has no usable spectral peak."""
