"""Exception hierarchy shared by all modules."""


class RegulusError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(RegulusError):
    pass


class DomainViolation(RegulusError):
    pass


class DegreeCapExceeded(RegulusError):
    pass


class BadSpec(RegulusError):
    pass


class EvalFailed(RegulusError):
    pass


class MissingJets(RegulusError):
    pass


class ExhaustedRetries(RegulusError):
    pass


class InclusionViolated(RegulusError):
    pass


class EmptyLevelSet(RegulusError):
    pass


class AmbiguousComponent(RegulusError):
    pass


class NoConvergence(RegulusError):
    pass


class ExponentSearchFailed(RegulusError):
    pass


class BadDims(RegulusError):
    pass


class NoChartCovers(RegulusError):
    pass


class NoCover(RegulusError):
    pass


class ChartEscape(RegulusError):
    pass


class BlendLeftDomain(RegulusError):
    pass


class RecursionDepthExceeded(RegulusError):
    pass


class ToleranceNotMet(RegulusError):
    pass


class NotAProjection(RegulusError):
    pass


class NotInvertible(RegulusError):
    pass


class RankDrop(RegulusError):
    pass


class UnmatchedSample(RegulusError):
    pass


class NoInteriorWindow(RegulusError):
    pass


class SamplingTooCoarse(RegulusError):
    pass
