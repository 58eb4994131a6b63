"""Exception hierarchy shared by the library, the CLI and the MCP tools.

Every exception carries the process exit code the CLI reports for it:
0 ok, 2 usage, 3 data validation, 4 numerical failure, 5 I/O.
"""

from typing import Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from .glm_fit import ModelId


class CmcError(Exception):
    """Base exception for model-selection errors."""

    exit_code = 4


class UsageError(CmcError):
    """Raised when the caller supplies invalid arguments or combinations."""

    exit_code = 2


class DomainError(UsageError, ValueError):
    """Raised when a numerical argument lies outside its mathematical domain."""

    pass


class MissingColumnError(UsageError):
    """Raised when a requested CSV column does not exist."""

    pass


class SearchTooLargeError(UsageError):
    """Raised when exhaustive search is requested beyond the configured limit."""

    pass


class DataValidationError(CmcError):
    """Raised when input data violates the dataset contract."""

    exit_code = 3


class NonNumericCellError(DataValidationError):
    """Raised when a CSV cell is missing or not numeric."""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(message)
        self.row = row
        self.column = column


class InvalidResponseError(DataValidationError):
    """Raised when the response values do not fit the family."""

    pass


class ConstantColumnError(DataValidationError):
    """Raised when a predictor column is constant."""

    pass


class NumericalError(CmcError):
    """Base exception for numerical failures."""

    exit_code = 4


class SingularDesignError(NumericalError):
    """Raised when selected design columns are linearly dependent."""

    def __init__(self, message: str, columns: tuple = ()):
        super().__init__(message)
        self.columns = tuple(columns)


class DegenerateFitError(NumericalError):
    """Raised when a fit interpolates the data or its MLE does not exist."""

    pass


class ConvergenceError(NumericalError):
    """Raised when an iterative special-function routine fails to converge."""

    pass


class NumericalOverflowError(NumericalError):
    """Raised when a linear predictor or likelihood term is not finite."""

    pass


class InternalConsistencyError(NumericalError):
    """Raised when a computed quantity contradicts a guaranteed identity."""

    pass


class ModelFitError(NumericalError):
    """Raised when fitting a candidate model fails; carries the offending model."""

    def __init__(self, message: str, model: Optional["ModelId"] = None):
        super().__init__(message)
        self.model = model


class SimulationAbortedError(NumericalError):
    """Raised when too many simulation trials fail."""

    pass


class InputOutputError(CmcError):
    """Raised when reading inputs or writing reports fails."""

    exit_code = 5
