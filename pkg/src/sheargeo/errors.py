"""Exception types raised across the package."""


class GeometryError(Exception):
    """Base class for every error raised by sheargeo."""


class SingularMetric(GeometryError):
    pass


class OutOfChart(GeometryError):
    pass


class NotSPD(GeometryError):
    pass


class DegenerateOmega(GeometryError):
    pass


class NotContact(GeometryError):
    pass


class NotNull(GeometryError):
    pass


class NoDecomposition(GeometryError):
    pass


class RankDeficientBasis(GeometryError):
    pass


class SignatureError(GeometryError):
    pass


class MissingDerivative(GeometryError):
    pass


class HorizonCrossing(GeometryError):
    pass


class NoHolomorphicChart(GeometryError):
    pass


class KernelDimensionMismatch(GeometryError):
    pass


class BadCurvatureSign(GeometryError):
    pass


class ODEStepError(GeometryError):
    pass


class ConfigError(GeometryError):
    pass
