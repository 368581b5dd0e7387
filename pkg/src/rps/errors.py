"""Exception hierarchy shared by the library and the CLI."""


class RpsError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(RpsError, ValueError):
    """Invalid user-facing parameter (mesh sizes, config fields, ...)."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class CoefficientError(RpsError, ValueError):
    """A coefficient field sampled to a non-positive value."""


class StructuralError(RpsError, ValueError):
    """Objects that must belong together do not (mesh/dual mismatch, wrong sizes)."""


class DegenerateSupportError(RpsError):
    """A localized support contains no free fine nodes."""


class SolverError(RpsError):
    """A linear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, node=None):
        self.residual = residual
        self.node = node
        super().__init__(message)


class ConditioningError(RpsError):
    """A dense matrix is numerically singular."""

    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class MeasurementCoverageError(RpsError, ValueError):
    """Point measurements are missing for some coarse nodes."""


class FitError(RpsError, ValueError):
    """Not enough data to fit a convergence rate."""
