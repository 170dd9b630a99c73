"""Exception hierarchy for the CATS laboratory.

Every failure a caller can act on has its own class. The three umbrella
categories (usage, data, numeric) decide the CLI exit code.
"""


class CatsLabError(Exception):
    """Base class for all errors raised by this package."""


# Usage / configuration -----------------------------------------------------


class UsageError(CatsLabError):
    """Bad command line: unknown subcommand, bad flag."""


class ConfigError(UsageError, ValueError):
    """Config file or override rejected (unknown-key, type-error, duplicate-key)."""


# Data errors ---------------------------------------------------------------


class DataError(CatsLabError):
    """Input data is malformed or unusable."""


class ShapeMismatchError(DataError, ValueError):
    """Array extents are incompatible with the requested operation."""


class TooFewSamplesError(DataError, ValueError):
    pass


class EmptyInputError(DataError, ValueError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class NoSharedLabelsError(DataError, ValueError):
    pass


class LabelRangeError(DataError, ValueError):
    pass


class SeriesTooShortError(DataError, ValueError):
    pass


class WindowTooLongError(DataError, ValueError):
    pass


class BatchTooSmallError(DataError, ValueError):
    pass


class AdapterCountError(DataError, ValueError):
    pass


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class ShapeOverflowError(DataError):
    pass


class NonPsdTemplateError(DataError, ValueError):
    pass


class NotSymmetricError(DataError, ValueError):
    pass


class BandwidthError(DataError, ValueError):
    """Non-positive kernel bandwidth."""


# Numeric errors ------------------------------------------------------------


class NumericError(CatsLabError, ArithmeticError):
    """A computation left its valid numeric domain."""


class NumericDomainError(NumericError):
    """log of non-positive, sqrt of negative, or a non-finite result."""


class NonScalarLossError(NumericError):
    pass


class UninitializedStateError(NumericError):
    pass


class DegenerateVarianceError(NumericError):
    pass


class ZeroMatrixError(NumericError):
    pass


class NoConvergenceError(NumericError):
    pass


class SingularTargetError(NumericError):
    pass


class NonFinitePartError(NumericError):
    pass
