"""Exception types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all structured engine failures."""


class DimensionMismatch(EngineError):
    pass


class TruncationError(EngineError):
    pass


class ContractionError(EngineError):
    """An implicit solve failed to close; carries the offending weight."""

    def __init__(self, message: str, weight: int | None = None):
        super().__init__(message if weight is None else f"{message} (weight {weight})")
        self.weight = weight


class DegeneracyError(EngineError):
    """A pipeline stage hit a degenerate linear problem.

    ``stage`` names the solver, ``order`` the u-order at which it failed.
    """

    def __init__(self, stage: str, message: str, order: int | None = None):
        loc = stage if order is None else f"{stage} at u-order {order}"
        super().__init__(f"{loc}: {message}")
        self.stage = stage
        self.order = order


class PoleError(EngineError):
    """A fractional-linear map or chain was evaluated on its pole set."""


class GroupPatternError(EngineError):
    """A matrix claimed to lie in the isotropy group does not fit its pattern."""


class RealityError(EngineError):
    """A series or matrix that must be real/anti-self-adjoint is not."""


class BranchError(EngineError):
    """A square-root branch cannot be taken exactly."""
