"""Exception types raised by the package."""
from __future__ import annotations


class BosefpError(Exception):
    pass


class ConfigurationError(BosefpError, ValueError):
    pass


class DomainError(BosefpError, ValueError):
    pass


class InputError(BosefpError, ValueError):
    pass


class NumericalError(BosefpError, RuntimeError):
    """Quadrature or root finding did not reach the requested tolerance."""

    def __init__(self, message: str, tolerance: float | None = None, achieved: float | None = None):
        super().__init__(message)
        self.tolerance = tolerance
        self.achieved = achieved


class SolverFailure(BosefpError, RuntimeError):
    """Time integration gave up; carries the last accepted state and partial output."""

    def __init__(self, message: str, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory


class OracleInapplicable(BosefpError, RuntimeError):
    """Picard iteration for the Duhamel map is not contracting on the requested interval."""


class PropertyViolation(BosefpError, AssertionError):
    """A structural property (ordering, monotonicity, conservation) failed beyond tolerance."""

    def __init__(self, message: str, where=None):
        super().__init__(message)
        self.where = where
