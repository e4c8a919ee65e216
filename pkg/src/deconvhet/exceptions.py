"""Exception hierarchy.

Two families: :class:`ConfigurationError` for bad inputs detected before any
numerical work, and :class:`NumericalError` for failures during computation.
The CLI maps them to exit codes 2 and 3.
"""


class DeconvHetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DeconvHetError, ValueError):
    """Invalid user input, configuration or data file."""


class NumericalError(DeconvHetError, ArithmeticError):
    """A computation could not be carried out reliably."""


# configuration / data errors

class NonPositiveVariance(ConfigurationError):
    pass


class EmptyReplicates(ConfigurationError):
    pass


class LengthMismatch(ConfigurationError):
    pass


class UnsupportedOrder(ConfigurationError):
    pass


class InsufficientReplicates(ConfigurationError):
    pass


class MissingColumn(ConfigurationError):
    pass


class NonNumericCell(ConfigurationError):
    def __init__(self, row, col, value):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"row {row}, column {col!r}: not a finite number: {value!r}")


class TooFewRows(ConfigurationError):
    pass


# numerical errors

class QuadratureNotConverged(NumericalError):
    pass


class DegenerateCF(NumericalError):
    """Characteristic function too close to zero where it must be inverted."""


class NonInvertibleCorrectedMoments(NumericalError):
    pass


class NegativeVarianceEstimate(NumericalError):
    pass


class StageError(DeconvHetError):
    """Wraps an upstream error with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
