"""Exception types shared across the toolkit."""

from __future__ import annotations


class ReductionKitError(Exception):
    """Base class for every error raised by the toolkit."""


class DimensionCapError(ReductionKitError):
    """A matrix build would exceed the configured dimension cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"required dimension {required} exceeds cap {cap}")
        self.required = required
        self.cap = cap


class ConvergenceError(ReductionKitError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class InfeasibleCouplingError(ReductionKitError):
    """A requested gadget coupling lies outside the achievable range."""

    def __init__(self, requested: float, achievable: float):
        super().__init__(
            f"target coupling {requested!r} exceeds achievable maximum {achievable!r}"
        )
        self.requested = requested
        self.achievable = achievable


class UnboundedDualError(ReductionKitError):
    """The dual functional grows without bound: the density is not representable."""

    def __init__(self, message: str, direction):
        super().__init__(message)
        self.direction = direction


class ConfigError(ReductionKitError):
    """An experiment configuration is invalid."""
