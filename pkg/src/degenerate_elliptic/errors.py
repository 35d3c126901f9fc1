"""Exception hierarchy shared by all modules."""


class DegenerateEllipticError(Exception):
    """Base class for package errors."""


class ParameterDomainError(DegenerateEllipticError, ValueError):
    """Model parameters outside their admissible range."""


class GeometryError(DegenerateEllipticError, ValueError):
    """A point, probe or segment does not fit the domain."""


class NumericError(DegenerateEllipticError, ArithmeticError):
    """Non-finite values or failed numerical differentiation."""


class PrecisionError(NumericError):
    """A series or iteration hit its cap before reaching the requested accuracy."""


class InputError(DegenerateEllipticError, ValueError):
    """Inconsistent or out-of-range user input."""


class SolverError(DegenerateEllipticError, RuntimeError):
    """Linear solve failed or missed its residual target."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class ConvergenceError(SolverError):
    """Iteration cap exceeded."""


class ScenarioError(DegenerateEllipticError, RuntimeError):
    """A verification scenario did not produce its required configuration."""
