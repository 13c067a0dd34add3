class CutFracError(Exception):
    """Base class for all solver errors."""


class DomainError(CutFracError):
    """Malformed or inconsistent domain description."""


class GeometryError(CutFracError):
    pass


class AdjacencyError(GeometryError):
    pass


class FieldError(CutFracError):
    pass


class AssemblyError(CutFracError):
    pass


class SolverError(CutFracError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ParameterError(CutFracError, ValueError):
    pass
