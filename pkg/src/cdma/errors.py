"""Exception hierarchy.

The CLI maps ``UsageError`` to exit code 1, ``DataError`` (and subclasses) to
exit code 2 and ``InvariantError`` to exit code 3.
"""


class CdmaError(Exception):
    pass


class UsageError(CdmaError):
    pass


class ConfigError(UsageError):
    pass


class DataError(CdmaError):
    pass


class FormatError(DataError):
    pass


class EmptySignal(DataError):
    pass


class TooShort(DataError):
    pass


class TooShortForSegment(DataError):
    pass


class EmptySegmentSet(DataError):
    pass


class MontageError(DataError):
    pass


class NoData(DataError):
    pass


class InsufficientData(DataError):
    pass


class ShapeError(CdmaError, ValueError):
    pass


class ArityError(CdmaError, ValueError):
    pass


class StateError(CdmaError, RuntimeError):
    pass


class InvariantError(CdmaError, AssertionError):
    pass


class LeakageError(InvariantError):
    pass
