"""Exception hierarchy shared by all modules."""


class AmplitudeError(Exception):
    """Base class for all package errors."""


class DimensionError(AmplitudeError, ValueError):
    """Array shapes or grids do not match."""


class DomainError(AmplitudeError, ValueError):
    """An argument lies outside the admissible range."""


class NumericError(AmplitudeError, ValueError):
    """Non-finite input where finite values are required."""


class SingularityError(AmplitudeError, ZeroDivisionError):
    pass


class AliasingError(AmplitudeError, ValueError):
    """Collocation grid too coarse for exact cubic products."""


class CatalogError(AmplitudeError, KeyError):
    pass


class ConvergenceError(AmplitudeError, RuntimeError):
    pass


class PreconditionError(AmplitudeError, ValueError):
    pass


class FitError(AmplitudeError, ValueError):
    pass


class ExperimentAborted(AmplitudeError, RuntimeError):
    """Too many samples blew up; the parameters are outside the theory's regime."""
