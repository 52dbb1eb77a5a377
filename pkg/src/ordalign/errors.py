"""Exception types shared across the package."""


class OrdalignError(Exception):
    """Base class for all package errors."""


class ValidationError(OrdalignError, ValueError):
    """Input violates a documented precondition or file schema."""


class InfeasibleError(ValidationError):
    """No admissible assignment exists (fewer intervals than annotation slots)."""


class NumericalError(OrdalignError, ArithmeticError):
    """The optimization produced a non-finite quantity."""
