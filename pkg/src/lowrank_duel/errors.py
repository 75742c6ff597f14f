"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


class ConstructionFailure(RuntimeError):
    """Instance generation could not satisfy a required property."""


class DivergenceError(RuntimeError):
    """An iterative solver produced a non-finite value."""


class NumericalFailure(RuntimeError):
    """A linear system stayed singular beyond ridge recovery."""


class ConditionNotMet(RuntimeError):
    """A certificate's applicability condition fails for the given data."""


class InconsistencyError(RuntimeError):
    """Observed values contradict each other during completion."""


class RankDeficiencyError(RuntimeError):
    """A block that must be inverted is numerically rank deficient."""
