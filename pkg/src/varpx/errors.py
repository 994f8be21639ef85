"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class UnsupportedError(NotImplementedError):
    """The requested variant is not available for this object."""


class CoveringError(RuntimeError):
    """Radius search for an oscillation covering fell below one mesh cell."""

    def __init__(self, message: str, ball: int, time: float, oscillation: float):
        super().__init__(message)
        self.ball = ball
        self.time = time
        self.oscillation = oscillation


class SolverError(RuntimeError):
    """A time step could not be solved even after step-size halving."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
