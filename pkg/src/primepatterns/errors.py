"""Exception types shared across the package.

Every error carries a short ``code`` used by the CLI to pick an exit status
and to print a single machine-parsable line.
"""


class PrimePatternsError(Exception):
    code = "error"
    exit_status = 1


class InvalidParameterError(PrimePatternsError, ValueError):
    code = "invalid-parameter"
    exit_status = 3


class DomainError(InvalidParameterError):
    code = "domain"


class BudgetError(PrimePatternsError):
    """A requested computation exceeds a configured size limit."""

    code = "budget"
    exit_status = 5


class CacheMissError(PrimePatternsError, KeyError):
    code = "cache-miss"
    exit_status = 5

    def __str__(self):
        # KeyError quotes its argument; keep the message readable.
        return str(self.args[0]) if self.args else ""


class ConvergenceError(PrimePatternsError):
    code = "no-convergence"
    exit_status = 6

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class UnitError(InvalidParameterError):
    code = "unit"


class SingularFitError(PrimePatternsError):
    code = "singular-fit"
    exit_status = 6


class MissingWindowError(PrimePatternsError):
    code = "missing-window"
    exit_status = 5


class EmptyInputError(InvalidParameterError):
    code = "empty-input"


class TableIOError(PrimePatternsError, OSError):
    code = "io"
    exit_status = 4
