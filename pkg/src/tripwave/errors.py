"""Exception types raised across the package."""


class TripwaveError(Exception):
    """Base class for all package errors."""


class InvalidParams(TripwaveError, ValueError):
    """A parameter set violates positivity or ``a > 1, h < 1 < k``."""

    def __init__(self, constraint: str):
        super().__init__(constraint)
        self.constraint = constraint


class HypothesisViolated(TripwaveError):
    """A hypothesis required by a construction or existence check fails."""

    def __init__(self, condition: str):
        super().__init__(condition)
        self.condition = condition


class NoCoexistenceState(TripwaveError):
    pass


class EigenSolveFailure(TripwaveError):
    pass


class StepSizeError(TripwaveError):
    pass


class RootBracketFailure(TripwaveError):
    pass


class DomainError(TripwaveError, ValueError):
    pass


class CFLViolation(TripwaveError):
    pass


class BlowUp(TripwaveError):
    pass


class InsufficientData(TripwaveError):
    pass


class NoFront(TripwaveError):
    pass


class NewtonDivergence(TripwaveError):
    pass


class NonPositiveProfile(TripwaveError):
    pass


class ConfigError(TripwaveError, ValueError):
    pass
