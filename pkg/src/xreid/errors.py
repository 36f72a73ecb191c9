"""Exception types raised across the pipeline."""


class XReIDError(Exception):
    """Base class for all pipeline errors."""


class DegenerateNeighborhood(XReIDError):
    pass


class InvalidParams(XReIDError):
    pass


class CohortTooLarge(XReIDError):
    pass


class SubjectStationary(XReIDError):
    pass


class OutOfDomain(XReIDError):
    pass


class NoSubjectsFound(XReIDError):
    pass


class ShapeMismatch(XReIDError):
    pass


class EmptyFrame(XReIDError):
    pass


class EmptySequence(XReIDError):
    pass


class InsufficientIdentities(XReIDError):
    pass


class EmptyInput(XReIDError):
    pass


class SizeLimitExceeded(XReIDError):
    pass


class QueryIdentityMissing(XReIDError):
    pass


class ConfigError(XReIDError):
    pass
