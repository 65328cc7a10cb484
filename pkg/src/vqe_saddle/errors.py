"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, counts, shapes or option values."""


class ResourceError(RuntimeError):
    """Requested problem is too large for the dense simulator."""


class LocatorError(RuntimeError):
    """A critical-point search ran out of budget.

    The attempted trajectory (if any) is attached as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class FitError(ValueError):
    """Too few or invalid points for a power-law fit."""
