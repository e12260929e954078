"""Exception hierarchy shared by all graphexon modules."""


class GraphexonError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(GraphexonError, ValueError):
    """A grid field does not match the vertex count of its graph."""


class SizeError(GraphexonError, ValueError):
    """A dense computation was requested on a problem that is too large."""


class DomainError(GraphexonError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigurationError(GraphexonError, ValueError):
    """A simulation or run configuration violates its invariants."""


class NoStabilizingSolutionError(GraphexonError, ArithmeticError):
    """The baseline Riccati equation has no stabilizing root."""


class NoRealSolutionError(GraphexonError, ArithmeticError):
    """The per-mode Riccati equation has a negative discriminant."""

    def __init__(self, message, mode=None, discriminant=None):
        super().__init__(message)
        self.mode = mode
        self.discriminant = discriminant


class ConvergenceError(GraphexonError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, last_iterate=None, estimate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.estimate = estimate
