"""Exception hierarchy shared by the solvers."""

from __future__ import annotations


class BuyinError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(BuyinError, ValueError):
    """Malformed data or arguments (bad shapes, bounds, file contents)."""


class DomainError(BuyinError, ValueError):
    """A value lies outside the domain where a function is defined."""


class InfeasibleInstanceError(BuyinError):
    """The portfolio instance (or a subproblem of it) has no feasible point."""


class NumericalFailureError(BuyinError):
    """A solver failed to reach its tolerances.

    ``trace`` carries whatever partial progress the solver recorded.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
