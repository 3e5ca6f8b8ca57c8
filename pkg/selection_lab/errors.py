from typing import Optional


class SelectionLabError(Exception):
    """Base class for every error raised by the lab."""


class DomainError(SelectionLabError, ValueError):
    """An argument lies outside the domain of a numeric routine."""


class InstanceValidationError(SelectionLabError, ValueError):
    """An instance breaks one of its type invariants (e.g. a negative weight)."""


class InstanceParseError(SelectionLabError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InfeasibleParametersError(SelectionLabError, ValueError):
    """Algorithm parameters violate the algorithm's preconditions."""


class InvariantViolation(SelectionLabError, AssertionError):
    """A structural invariant failed while an algorithm was running."""


class OracleSizeError(SelectionLabError, ValueError):
    """A brute-force oracle was asked to enumerate an instance that is too large."""
