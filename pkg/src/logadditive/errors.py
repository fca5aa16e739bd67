"""Exception hierarchy.

The CLI maps these onto exit codes: I/O problems exit 1, anything deriving
from :class:`DataError` exits 2 and anything deriving from
:class:`NumericalError` exits 3.
"""


class LogAdditiveError(Exception):
    """Base class for all package errors."""


class DataError(LogAdditiveError, ValueError):
    """Invalid input data or invalid model specification."""


class ProfileParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ValidationError(DataError):
    def __init__(self, record_id, field, message):
        self.record_id = record_id
        self.field = field
        super().__init__(f"record {record_id!r}, field {field!r}: {message}")


class EmptySetError(DataError):
    pass


class SpecError(DataError):
    pass


class DomainError(DataError):
    """Argument outside the domain of a function (log of a nonpositive value, psi outside [-1, 1])."""


class CovariateError(DataError, LookupError):
    def __init__(self, record_id, name):
        self.record_id = record_id
        self.name = name
        super().__init__(f"record {record_id!r} has no covariate {name!r}")

    def __str__(self):
        return self.args[0]


class NumericalError(LogAdditiveError, ArithmeticError):
    """Base class for failures of the numerical machinery."""


class RankDeficiencyError(NumericalError):
    def __init__(self, message, term=None):
        self.term = term
        super().__init__(message)


class SaturationError(NumericalError):
    """N - tr[K G] <= 0: the effective degrees of freedom are exhausted."""


class OverParameterizedError(NumericalError):
    """N - 2 tr[K G] <= 0: the Rice criterion is undefined for this model."""


class NonConvergenceError(NumericalError):
    def __init__(self, message, payload=None):
        self.payload = payload
        super().__init__(message)


class SingularConductivityError(NumericalError):
    pass
