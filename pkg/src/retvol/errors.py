"""Exception hierarchy.

Two families: ``InputError`` for bad or malformed data and arguments (the
CLI maps these to exit code 2), and ``ComputationError`` for estimators that
cannot produce a result from otherwise valid data (exit code 3).
"""


class RetvolError(ValueError):
    pass


class InputError(RetvolError):
    pass


class ComputationError(RetvolError):
    pass


# series
class MalformedRow(InputError):
    pass


class NonPositivePrice(InputError):
    pass


class NonMonotonicTimestamp(InputError):
    pass


class TooShort(InputError):
    pass


class DeltaTooLarge(InputError):
    pass


class ProfileMismatch(InputError):
    pass


class ZeroVariance(ComputationError):
    pass


# estimators
class LagTooLarge(ComputationError):
    pass


class EmptyCondition(ComputationError):
    pass


class WindowTooLarge(ComputationError):
    pass


class InsufficientPoints(ComputationError):
    pass


class EmptySide(ComputationError):
    pass


# retarded model / generators
class BadParameters(InputError):
    pass


class WrongCurveKind(InputError):
    pass


class RefTooShort(InputError):
    pass


class SeriesTooShort(InputError):
    pass
