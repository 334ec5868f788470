"""Exception hierarchy shared by the solver, the viability engine and the CLI."""

from __future__ import annotations


class FracviaError(RuntimeError):
    """Base class for numerical failures raised by the library."""


class NonFiniteError(FracviaError):
    """A coefficient or state evaluation produced a non-finite value."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(FracviaError):
    """An iteration did not converge; ``history`` holds the residual trail."""

    def __init__(self, message: str, history=None, table=None):
        super().__init__(message)
        self.history = list(history or [])
        self.table = table


class ViabilityViolation(FracviaError):
    """The contingency certificate failed at ``(time, point)``."""

    def __init__(self, message: str, time: float, point, q_growth_exponent: float,
                 certificate=None):
        super().__init__(message)
        self.time = time
        self.point = point
        self.q_growth_exponent = q_growth_exponent
        self.certificate = certificate


class ResolutionError(FracviaError):
    """The required step fell below the grid resolution."""


class BudgetError(FracviaError):
    """A built path exceeded the radius budget ``B0`` of the ledger."""
