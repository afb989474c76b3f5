"""rhythmkit: remote heart-rate estimation from facial video.

Spatial-temporal map extraction, classical spectral estimators (GREEN,
CHROM, POS), a numpy RhythmNet (CNN + GRU) with its training loop, error
metrics, and a synthetic pulse oracle.
"""
__version__ = "0.1.0"

from .errors import GeometryError, IngestError, NoPeakError, RhythmKitError

__all__ = ["GeometryError", "IngestError", "NoPeakError", "RhythmKitError", "__version__"]
