"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation/shape problems
exit 2, I/O and corrupt-file problems exit 3, numeric failures exit 4.
"""


class ShapeError(ValueError):
    """An array has the wrong shape or dimensions for an operation."""


class ValidationError(ValueError):
    """Input data or configuration violates a documented contract."""


class IngestionError(OSError):
    """A file could not be read, decoded, or fails its integrity check."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf where finite values are required."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input (e.g. single-class AUC)."""
