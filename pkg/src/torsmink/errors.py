"""Exception hierarchy shared by all torsmink modules."""


class TorsminkError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(TorsminkError, ValueError):
    pass


class TooFewNormals(InvalidInput):
    pass


class NonPositiveWeight(InvalidInput):
    pass


class HemisphereViolation(InvalidInput):
    """All normals lie in a closed half-circle; Wulff shapes are unbounded."""


class Unbounded(HemisphereViolation):
    pass


class EmptyInterior(TorsminkError):
    """A halfplane intersection has zero area."""


class DegenerateGeometry(TorsminkError):
    pass


class SolverDiverged(TorsminkError):
    pass


class IdentityMismatch(TorsminkError):
    """Two quantities that must agree (up to discretisation error) do not."""


class OriginOnBoundary(TorsminkError):
    pass


class MissingFacet(TorsminkError):
    pass


class PCritical(InvalidInput):
    """p equals n + 2, where the unnormalised problem has no scaling map."""


class MaxItersExceeded(TorsminkError):
    def __init__(self, message, history=None, report=None):
        super().__init__(message)
        self.history = list(history or [])
        self.report = report
