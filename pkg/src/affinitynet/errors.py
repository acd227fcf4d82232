"""Exception types raised across the package."""


class AffinityNetError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(AffinityNetError, ValueError):
    pass


class NonFinite(AffinityNetError, FloatingPointError):
    pass


class NotScalar(AffinityNetError, ValueError):
    pass


class ZeroVector(AffinityNetError, ValueError):
    pass


class KTooLarge(AffinityNetError, ValueError):
    pass


class MissingGraph(AffinityNetError, ValueError):
    pass


class SpecInvalid(AffinityNetError, ValueError):
    pass


class EmptyMask(AffinityNetError, ValueError):
    pass


class LabelOutOfRange(AffinityNetError, ValueError):
    pass


class NoEvents(AffinityNetError, ValueError):
    pass


class Diverged(AffinityNetError, RuntimeError):
    """Training produced a non-finite loss. ``history`` holds the epochs run so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class LengthMismatch(AffinityNetError, ValueError):
    pass


class NotSymmetric(AffinityNetError, ValueError):
    pass


class DegenerateDegree(AffinityNetError, ValueError):
    pass


class NoComparablePairs(AffinityNetError, ValueError):
    pass


class EmptyGroup(AffinityNetError, ValueError):
    pass


class BadProportions(AffinityNetError, ValueError):
    pass


class Ragged(AffinityNetError, ValueError):
    pass


class NonNumeric(AffinityNetError, ValueError):
    pass


class MissingValue(AffinityNetError, ValueError):
    pass


class EmptyTable(AffinityNetError, ValueError):
    pass


class MTooLarge(AffinityNetError, ValueError):
    pass


class ClassTooSmall(AffinityNetError, ValueError):
    pass


class ConfigError(AffinityNetError, ValueError):
    pass
