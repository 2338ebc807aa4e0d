"""Exception hierarchy shared by every wnvdb module."""


class WNVError(Exception):
    """Base class for all errors raised by wnvdb."""


# schema-core
class UnknownFile(WNVError, ValueError):
    pass


class AmbiguousFile(WNVError, ValueError):
    pass


class HeaderMismatch(WNVError, ValueError):
    pass


class EmptyFile(WNVError, ValueError):
    pass


# pipeline
class InconsistentAnchor(WNVError, ValueError):
    pass


class MixedSlices(WNVError, ValueError):
    pass


class SampleTooLarge(WNVError, ValueError):
    pass


# richards / estimation
class TooFewPoints(WNVError, ValueError):
    pass


class InvalidParams(WNVError, ValueError):
    pass


class AllStartsFailed(WNVError, RuntimeError):
    pass


class NotConverged(WNVError, RuntimeError):
    pass


class CovarianceUnavailable(WNVError, RuntimeError):
    """Inverse Hessian could not be formed at the optimum."""


class DegenerateVariance(WNVError, ValueError):
    pass


class NoAsymptote(WNVError, ValueError):
    pass


# analytics
class DuplicateWeatherKey(WNVError, ValueError):
    pass


class UnreadableFile(WNVError, ValueError):
    """Content is not UTF-8 CSV text."""
