"""Exception types raised across the toolkit.

Everything derives from :class:`ArtifactForgeError` so callers (and the CLI)
can separate data problems from programming errors.
"""


class ArtifactForgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ArtifactForgeError, ValueError):
    pass


class DataError(ArtifactForgeError, ValueError):
    """Input data violates a contract (bad file, wrong shape, ...)."""


class MalformedPly(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class UnsupportedShDegree(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class TooFewFrames(DataError):
    pass


class TooShort(DataError):
    pass


class SegmentTooShort(DataError):
    pass


class DegenerateGeometry(DataError):
    pass


class BudgetExceeded(DataError):
    pass


class EmptyLabelSet(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class IoFailure(ArtifactForgeError, OSError):
    pass
