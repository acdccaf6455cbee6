"""Exception hierarchy shared by every module of the package."""


class UnreductionError(Exception):
    """Base class for all errors raised by ``unreduce``."""


class DomainError(UnreductionError, ValueError):
    """A point lies outside the validity domain of a chart."""


class ConditioningError(UnreductionError, ArithmeticError):
    """A frame matrix, metric or Hessian is singular or too ill-conditioned."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class NonFiniteError(UnreductionError, ArithmeticError):
    """A coefficient function returned NaN or infinity."""


class ValidationError(UnreductionError, ValueError):
    """Inconsistent input data (dimensions, symmetry, slice conditions, ...)."""


class CapabilityError(UnreductionError, TypeError):
    """The requested operation needs data the object does not carry."""


class GridMismatchError(UnreductionError, ValueError):
    """Two trajectories do not share the same time grid."""


class UnknownSystemError(UnreductionError, KeyError):
    """No system is registered under the requested identifier."""
