"""Exception hierarchy.

Every error raised on purpose derives from :class:`ProdrandError`; the CLI maps
``exit_code`` onto the process status.
"""

from __future__ import annotations


class ProdrandError(Exception):
    exit_code = 1


class ParameterError(ProdrandError, ValueError):
    """A parameter is outside its admissible range."""


class UsageError(ProdrandError, TypeError):
    """An operation was called with the wrong kind of ensemble."""


class DomainError(ParameterError):
    """A closed-form quantity is undefined at the requested point."""


class ValidityError(ParameterError):
    """A bound was requested outside the region where it is proven."""


class CapabilityError(ProdrandError):
    """The request exceeds a configured computational cap."""


class DegenerateTrajectoryError(ProdrandError):
    """A product step annihilated the tracked vector or matrix."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"zero stretch at step {step}")
