"""Exception types shared across the package."""


class MixregError(Exception):
    """Base class for package errors."""


class GeometryError(MixregError, ValueError):
    """Invalid geometric input or a violated collar inclusion."""


class ProjectionError(GeometryError):
    """Newton projection onto the boundary failed to converge.

    Attributes
    ----------
    iterate : ndarray
        Last boundary parameters reached by the iteration.
    residual : ndarray
        Stationarity residual at those parameters.
    """

    def __init__(self, message, iterate, residual):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class KernelError(MixregError, ValueError):
    """Kernel parameters outside their admissible range."""


class QuadratureError(MixregError, ValueError):
    """Nonlocal quadrature requested at an invalid node or scale."""


class ResourceLimitError(MixregError, MemoryError):
    """Estimated memory use exceeds the configured cap."""


class ConvergenceError(MixregError, RuntimeError):
    """An iterative method stopped without meeting its tolerance.

    Attributes
    ----------
    history : list
        Residual (or update-size) history up to the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class PolicyCycleError(ConvergenceError):
    """Policy iteration revisited earlier policies without converging."""


class ConfigError(MixregError, ValueError):
    """Configuration document failed validation.

    Attributes
    ----------
    errors : list of str
        Every problem found, not just the first.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
