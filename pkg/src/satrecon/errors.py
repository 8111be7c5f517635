"""Exception types shared across the toolkit.

Domain failures raise ``SatreconError`` subclasses; plain argument misuse
(bad ranges, wrong shapes) raises ``ValueError`` as usual.
"""


class SatreconError(Exception):
    """Base class for domain errors raised by satrecon operations."""


class FileFormatError(SatreconError):
    """A file on disk does not match its declared format."""


class NonProjectableError(SatreconError):
    """A point cannot be projected (behind camera, singular denominator)."""


class SingularMatrixError(SatreconError):
    """A matrix required to be invertible is numerically singular."""


class EmptyIntersectionError(SatreconError):
    """A projected region does not intersect the target image."""


class EvaluationError(SatreconError):
    """Height-map evaluation could not be carried out."""


class AlignmentError(EvaluationError):
    """Grid alignment failed (no overlapping valid cells)."""
