"""
Exception hierarchy and notice category for dbarlab.

Input problems raise subclasses of ``InvalidInputError`` (also a ``ValueError``),
failed internal cross-checks raise subclasses of ``ConsistencyError`` (also a
``RuntimeError``). Non-fatal conditions are emitted as ``DbarLabNotice`` warnings
and collected by the experiment runner.
"""


class DbarLabError(Exception):
    """Base class for all dbarlab errors."""


class InvalidInputError(DbarLabError, ValueError):
    """Rejected input: wrong dimensions, out-of-range parameters, malformed files."""

    def __init__(self, message: str, field: str = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NormalizationError(InvalidInputError):
    """A sampled weight value lies outside [0, 1]."""


class DegenerateDomainError(InvalidInputError):
    """A raster domain has no interior node."""


class HarmonicityError(InvalidInputError):
    """A field expected to be harmonic on a region is not, within tolerance."""


class NonPseudoconvexError(InvalidInputError):
    """A Reinhardt model whose logarithmic image fails the convexity test."""


class ConsistencyError(DbarLabError, RuntimeError):
    """An internal cross-check (quadrature vs closed form, etc.) failed."""


class PeriodError(ConsistencyError):
    """A harmonic conjugate has a period outside 2*pi*Z, so exp(i*Theta) is multivalued."""


class ConstructionError(ConsistencyError):
    """The weight extension could not be made strictly subharmonic."""


class DbarLabNotice(UserWarning):
    """Non-fatal condition that must appear in reports (truncations, skips, low confidence)."""
