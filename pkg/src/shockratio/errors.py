"""Exception hierarchy shared by all engines."""


class ShockRatioError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(ShockRatioError, ValueError):
    """An operation was called outside its documented domain."""


class InvalidDistribution(PreconditionError):
    pass


class NonDifferentiable(PreconditionError):
    pass


class TailBoundTooLoose(ShockRatioError):
    pass


class NotClassC2(PreconditionError):
    pass


class CombinatorialBlowup(ShockRatioError):
    pass


class HypothesisViolated(PreconditionError):
    pass


class NotAnAtom(PreconditionError):
    pass


class ResolutionTooCoarse(ShockRatioError):
    pass


class WindowInvalid(PreconditionError):
    pass


class EpsNotValid(PreconditionError):
    pass


class MgfUndefined(ShockRatioError):
    pass


class TargetOutOfRange(PreconditionError):
    pass


class ConditionFailed(PreconditionError):
    pass


class NTooSmall(PreconditionError):
    pass


class ConstantsOutOfOrder(PreconditionError):
    pass


class TiltNotSamplable(ShockRatioError):
    pass


class ParseError(ShockRatioError):
    pass


class UnsupportedCombination(ShockRatioError):
    pass


class EngineError(ShockRatioError):
    pass
