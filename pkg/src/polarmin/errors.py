"""Exception hierarchy shared by every module."""

from __future__ import annotations


class PolarminError(Exception):
    """Base class for all package errors."""


class ValidationError(PolarminError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateEdgeError(ValidationError):
    pass


class CapacityError(PolarminError):
    """Problem size exceeds a configured cap (dense inverse, brute force)."""


class NumericalError(PolarminError, ArithmeticError):
    """Factorization failure or a non positive-definite system."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int, probe: int | None = None):
        self.residual = residual
        self.iterations = iterations
        self.probe = probe
        if probe is not None:
            message = f"probe {probe}: {message}"
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")


class StabilityError(ValidationError):
    def __init__(self, dt: float, bound: float):
        self.dt = dt
        self.bound = bound
        self.suggested_dt = 0.1 * bound
        super().__init__(
            f"dt={dt:g} violates the explicit Euler stability bound {bound:g}; "
            f"try dt={self.suggested_dt:g}"
        )
