"""Exception hierarchy shared by all modules."""


class FoilWindingError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(FoilWindingError):
    """Invalid or inconsistent geometry (overlaps, degenerate shapes)."""


class ResolutionError(GeometryError):
    """Requested mesh size cannot resolve the layout."""


class MeshFormatError(FoilWindingError):
    """Malformed or unsupported mesh file."""


class TaggingError(FoilWindingError):
    """A physical group name could not be mapped to a region or boundary tag."""


class DomainError(FoilWindingError, ValueError):
    """Argument outside the domain of a function."""


class ConfigError(FoilWindingError):
    """Invalid configuration; ``location`` optionally names the offending entry."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location

    def __str__(self):
        msg = super().__str__()
        if self.location:
            return f"{self.location}: {msg}"
        return msg


class SolverError(FoilWindingError):
    """Linear solve failed; ``residual`` carries the relative residual norm if known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
