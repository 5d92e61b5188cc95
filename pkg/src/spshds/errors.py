from __future__ import annotations


class SpshdsError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(SpshdsError, ValueError):
    """Malformed configuration: bad distribution, unknown policy, empty grid, ..."""


class PreconditionError(SpshdsError, ValueError):
    """An operation was called outside its domain (e.g. a jump from outside D)."""


class AssumptionViolation(SpshdsError):
    """A structural assumption on the system failed at a concrete point."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class NoSolutionError(PreconditionError):
    """No solution exists from the requested initial condition."""


class EventBracketError(SpshdsError, ValueError):
    """The event predicate does not change across the bracket."""
