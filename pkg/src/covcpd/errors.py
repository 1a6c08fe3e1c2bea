"""Exception hierarchy shared by all modules."""


class CovCPDError(Exception):
    """Base class for errors raised by covcpd."""


class ArgumentError(CovCPDError, ValueError):
    """An argument is outside its documented range."""


class IllPosedProjectionError(CovCPDError, ValueError):
    """Least-squares projection onto the basis is rank deficient."""


class DegenerateCurveError(CovCPDError, ValueError):
    """A curve cannot be rescaled because its norm is zero."""

    def __init__(self, index: int):
        super().__init__(f"curve {index} has zero norm and cannot be rescaled")
        self.index = index


class BasisError(CovCPDError, ValueError):
    """The Gram matrix of the tensor basis is not positive definite."""


class NumericalError(CovCPDError, ArithmeticError):
    """Non-finite values reached a numerical routine."""


class SegmentTooShortError(CovCPDError, ValueError):
    """The sequence is shorter than the configured minimum segment."""


class FormatError(CovCPDError, ValueError):
    """An input file does not follow the expected layout."""


class DataError(CovCPDError, ValueError):
    """An input file contains invalid (non-finite) values."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column
