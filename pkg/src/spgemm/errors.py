"""Exception types shared across the package."""


class SpgemmError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SpgemmError, ValueError):
    """Invalid user-supplied parameters (bad dimensions, out-of-range indices, ...)."""


class ParseError(SpgemmError, ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(SpgemmError, RuntimeError):
    """An internal precondition was broken (planner or caller bug, not user input)."""


class OverBudgetError(SpgemmError, RuntimeError):
    """A single row's intermediate product exceeds the configured memory budget."""
