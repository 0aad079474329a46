"""Exception types raised across the package."""


class RDZError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(RDZError, ValueError):
    """A receiver coincides with a transmitter, so an angle is undefined."""


class InvalidDistance(RDZError, ValueError):
    """A link distance is outside the domain of the path-loss model."""


class NotPositiveSemiDefinite(RDZError, ValueError):
    """A covariance matrix has an eigenvalue below the tolerance."""


class SingularDesign(RDZError, ValueError):
    """The least-squares design matrix has no unique solution."""


class InsufficientSources(RDZError, ValueError):
    """Cross-correlation estimation needs at least two transmitters."""


class EstimationFailed(RDZError, RuntimeError):
    pass


class DegenerateVariogram(RDZError, ValueError):
    pass


class SingularSystem(RDZError, RuntimeError):
    """The bordered Kriging system could not be solved accurately."""


class ConfigError(RDZError, ValueError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
