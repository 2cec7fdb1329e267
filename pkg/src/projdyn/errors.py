"""Exception types shared across the package."""


class ProjdynError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ProjdynError, ValueError):
    """An array argument is malformed: wrong shape, wrong size, or non-finite."""


class InvalidMetricError(ProjdynError, ValueError):
    """A weight matrix is not symmetric positive definite."""


class InvalidParameterError(ProjdynError, ValueError):
    """A model or solver parameter is out of range."""


class RankDeficientError(ProjdynError, RuntimeError):
    """The classical multiplier solve hit a rank-deficient constraint Jacobian."""


class SingularInertiaError(ProjdynError, RuntimeError):
    """A constraint-inertia solve failed; the assembled matrix is singular."""


class TaskSingularityError(ProjdynError, RuntimeError):
    """The task-map Jacobian lost rank at the queried configuration."""


class UncontrollableError(ProjdynError, RuntimeError):
    """The requested command cannot be realised through the actuated joints."""


class ProjectionFailureError(ProjdynError, RuntimeError):
    """Newton iteration on the constraint residual diverged.

    Carries the residual history so callers can inspect how the
    iteration blew up.
    """

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class ScenarioError(ProjdynError, ValueError):
    """A scenario file is missing a field or holds an invalid value."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
