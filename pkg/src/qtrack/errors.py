"""Exception types raised across the package.

Every validation failure is a subclass of :class:`ValidationError` and its
class name doubles as the invariant name reported by the CLI.
"""


class QtrackError(Exception):
    """Base class for all package errors."""


class ValidationError(QtrackError, ValueError):
    """Problem data violates a documented invariant."""

    @property
    def invariant(self) -> str:
        return type(self).__name__


class EmptyQuantizer(ValidationError):
    pass


class NonAscendingThresholds(ValidationError):
    pass


class NonDecreasingWeights(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


class InvalidObservation(ValidationError):
    pass


class InvalidOmega(ValidationError):
    pass


class InvalidNoise(ValidationError):
    pass


class InvalidReference(ValidationError):
    pass


class InvalidBounds(ValidationError):
    pass


class WindowTooShort(ValidationError):
    pass


class ZeroLeadingCoefficient(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class TrialDiverged(QtrackError, RuntimeError):
    """A closed-loop trial produced a non-finite or runaway value."""

    def __init__(self, step: int, reason: str, trial_index: int | None = None):
        self.step = step
        self.reason = reason
        self.trial_index = trial_index
        where = f"trial {trial_index}, " if trial_index is not None else ""
        super().__init__(f"{where}step {step}: {reason}")
