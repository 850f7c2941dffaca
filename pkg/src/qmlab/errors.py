"""Exception hierarchy.

Everything raised on purpose by the library derives from :class:`LabError`,
so callers (the CLI in particular) can tell numerical failures apart from
programming errors.
"""


class LabError(Exception):
    """Base class for all library errors."""


class ShapeError(LabError, ValueError):
    """Operand dimensions do not compose."""


class ValidationError(LabError, ValueError):
    """An input violates a documented invariant (Hermiticity, norm, ...)."""


class StateValidationError(ValidationError):
    """Outcome weights of a state do not form a distribution."""


class RankError(LabError, ArithmeticError):
    """Linear system is singular or numerically singular."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegeneracyError(LabError, ValueError):
    """Repeated eigenvalue where distinct ones are required."""


class ConventionError(LabError, ValueError):
    """Input is incompatible with the selected power convention."""


class ConditioningError(LabError, ArithmeticError):
    """System too ill-conditioned for a trustworthy answer."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ImpossibleOutcomeError(LabError, ValueError):
    """Requested reduction onto a branch with zero weight."""


class IncompatibleObservablesError(LabError, ValueError):
    """Observables requested in one event do not commute."""


class PlacementError(LabError, ValueError):
    """Wave packet does not fit inside the grid."""


class InstabilityError(LabError, ArithmeticError):
    """Time stepping violated its guard or lost norm."""


class InconclusiveRunError(LabError, RuntimeError):
    """Scattering run ended before the packets cleared the barrier."""
